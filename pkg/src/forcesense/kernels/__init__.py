"""Hot numeric kernels with two interchangeable backends.

The heavy inner loops (temporal conv, image conv, point max-pool) exist twice:
a numba @njit version and a pure-numpy version built on patch-matrix GEMMs.
``FORCESENSE_KERNELS`` picks the backend at import time:

    FORCESENSE_KERNELS=numba   require numba (error if unavailable)
    FORCESENSE_KERNELS=numpy   force the pure-numpy fallback
    FORCESENSE_KERNELS=auto    numba when importable, numpy otherwise (default)

``benchmarks/bench_kernels.py`` compares both on training-shaped workloads.
Both backends are deterministic run-to-run; their results agree to float
rounding but not bitwise (different reduction orders).
"""

import os

from . import cpu_numpy


def _select():
    choice = os.environ.get("FORCESENSE_KERNELS", "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise RuntimeError(
            f"FORCESENSE_KERNELS must be auto|numba|numpy, got {choice!r}")
    if choice == "numpy":
        return cpu_numpy
    try:
        from . import cpu_numba
        return cpu_numba
    except ImportError:
        if choice == "numba":
            raise RuntimeError(
                "FORCESENSE_KERNELS=numba but numba is not importable")
        return cpu_numpy


_impl = _select()

BACKEND = _impl.NAME
conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
maxpool_points_forward = _impl.maxpool_points_forward
maxpool_points_backward = _impl.maxpool_points_backward


def available_backends():
    """Importable backend modules, keyed by name (for tests and benchmarks)."""
    out = {"numpy": cpu_numpy}
    try:
        from . import cpu_numba
        out["numba"] = cpu_numba
    except ImportError:
        pass
    return out
