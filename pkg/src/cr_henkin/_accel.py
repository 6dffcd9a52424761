"""Numba switch.

Hot kernels are written once as plain loops and compiled with ``njit`` when
numba is importable and ``CR_HENKIN_DISABLE_NUMBA`` is unset (or "0").
Each kernel module also carries a vectorised numpy twin; ``USE_NUMBA``
decides which one the public wrappers call.
"""
import os
import warnings

_flag = os.environ.get("CR_HENKIN_DISABLE_NUMBA", "0").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError
    from numba import njit as _njit
    from numba import prange

    # an old system TBB only triggers a warning; numba falls back to another layer
    warnings.filterwarnings("ignore", message="The TBB threading layer")

    USE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag
    _njit = None
    prange = range
    USE_NUMBA = False


def set_threads(n: int) -> None:
    """Thread count for the parallel kernels (no-op without numba)."""
    if USE_NUMBA and n and n > 0:
        import numba

        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        return _njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f
