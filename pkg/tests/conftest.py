import os

# BLAS patch-matrix GEMMs beat single-core njit loops at the shapes these
# tests train at, so default the suite to the numpy backend (the env var is
# read once at first forcesense import, which conftest precedes). A value
# already set in the environment wins. Backend parity and env selection are
# covered explicitly in test_kernels.py.
os.environ.setdefault("FORCESENSE_KERNELS", "numpy")

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_depth(rng, shape=(8, 8), invalid_frac=0.2):
    """Random depth map in mm with a sprinkling of zero (invalid) pixels."""
    d = rng.uniform(200.0, 800.0, size=shape)
    mask = rng.random(shape) < invalid_frac
    d[mask] = 0.0
    return d
