"""Kernel backend selection.

Hot loops (raycasting, the Minkowski oracle) exist twice: a numba @njit
version and a vectorized pure-numpy version. The numba path is used when
available unless COLLENC_NO_NUMBA is set to a non-empty value other than
"0". Both paths are importable side by side for parity tests and for
benchmarks/bench_kernels.py.
"""

import os

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        raise RuntimeError("numba is not installed; the njit path is unavailable")

    prange = range


def numba_disabled_by_env() -> bool:
    return os.environ.get("COLLENC_NO_NUMBA", "0") not in ("", "0")


USE_NUMBA = HAVE_NUMBA and not numba_disabled_by_env()
