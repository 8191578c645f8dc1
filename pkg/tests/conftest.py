"""Shared fixtures: one full-scale and one small simulated dataset.

Both are session scoped; tests must not mutate them.  A test that
needs to damage a dataset copies the arrays first.
"""

import numpy as np
import pytest

from ptychopos.fields import Geometry
from ptychopos.simulate import simulate_dataset

GEO_FULL = Geometry(wavelength=6.33e-4, distance=100.0,
                    detector_pitch=0.49453125, n_side=128)
GEO_SMALL = Geometry(wavelength=6.33e-4, distance=50.0,
                     detector_pitch=0.49453125, n_side=64)


@pytest.fixture(scope="session")
def full_dataset():
    """224 px scene, 89.6 px probe, 8x8 grid, noiseless."""
    return simulate_dataset(GEO_FULL, image_px=224, probe_diameter=89.6,
                            lambda_z=5e-4, grid_shape=(8, 8), step=19.2,
                            max_offset=10.0, photons=0.0, seed=11)


@pytest.fixture(scope="session")
def small_dataset():
    """112 px scene, 44.8 px probe, 4x4 grid, noiseless; fast."""
    return simulate_dataset(GEO_SMALL, image_px=112, probe_diameter=44.8,
                            lambda_z=1.25e-4, grid_shape=(4, 4), step=9.6,
                            max_offset=5.0, photons=0.0, seed=11)
