"""Digital twin of a BEC optical-lattice two-dimensional force sensor.

The package simulates the reciprocal-space response of a lattice-confined
condensate to applied forces, synthesizes the time-of-flight readout, and
runs the full metrology pipeline: force reconstruction, Allan-deviation
stability, sensitivity extraction, and quantum-limit comparisons.
"""

from .constants import HBAR, RB87_MASS
from .lattice import (BeamGeometry, ReciprocalLattice, bragg_peak_positions,
                      build_reciprocal_lattice, fold_to_fbz)
from .dynamics import (CondensateState, ForceProfile, QuasimomentumTrace,
                       apply_decoherence, evolve_quasimomentum, force_at,
                       force_from_impulse, sample_trace, unwrap_trace)
from .imaging import (DifferentialFitError, ImagingConfig, PeakFitResult,
                      TofImage, differential_wavevector, fit_peak,
                      synthesize_tof)
from .metrology import (AdevCurve, MeasurementSeries, PhysicalConstants,
                        allan_deviation, fit_force_linear,
                        fit_square_wave_plateaus, force_angle,
                        histogram_stability, normality_diagnostic,
                        ql_reciprocal, ql_reciprocal_sensitivity,
                        sensitivity_from_adev, sql_real, sql_real_sensitivity)

__version__ = "0.1.0"
