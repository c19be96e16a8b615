import numpy as np
import pytest

from becforce import (BeamGeometry, CondensateState, ImagingConfig,
                      build_reciprocal_lattice)


@pytest.fixture(scope="session")
def geom():
    return BeamGeometry.default()


@pytest.fixture(scope="session")
def lat(geom):
    return build_reciprocal_lattice(geom)


@pytest.fixture(scope="session")
def imcfg(lat):
    """Default-resolution imaging configuration."""
    return ImagingConfig.for_lattice(lat)


@pytest.fixture(scope="session")
def small_imcfg(lat):
    """Coarse, single-peak configuration for fast Monte Carlo loops."""
    b = lat.b_norm
    return ImagingConfig(nx=64, ny=64, k_per_pixel=b / 32.0,
                         peak_sigma_k=b / 40.0, thermal_sigma_k=b / 4.0,
                         shell_cutoff=0)


def make_state(n0=2.0e5, fraction=0.9, k=(0.0, 0.0), coherence=1.0):
    return CondensateState(n0=n0, condensate_fraction=fraction,
                           k=np.asarray(k, dtype=float), coherence=coherence)
