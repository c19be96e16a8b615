"""Physical constants used throughout the simulator (SI units)."""

HBAR = 1.054571817e-34  # reduced Planck constant (J*s), CODATA 2018 exact
RB87_MASS = 1.443160648e-25  # atomic mass of 87Rb (kg)

DEFAULT_WAVELENGTH = 1.064e-6  # lattice laser wavelength (m), configurable
