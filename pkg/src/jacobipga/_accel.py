"""Numba switch.

Hot kernels are written once in a numba-compatible numpy subset. When numba
is importable and ``JACOBIPGA_DISABLE_NUMBA`` is unset, they are compiled with
``@njit``; otherwise the same functions run as plain numpy.
"""
import os

_FLAG = "JACOBIPGA_DISABLE_NUMBA"

DISABLED = os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if DISABLED:
        raise ImportError(_FLAG)
    import numba
except ImportError:
    numba = None

ENABLED = numba is not None


def njit(func=None, **kwargs):
    """``numba.njit(cache=True, nogil=True)`` or the identity decorator."""
    def wrap(f):
        if not ENABLED:
            return f
        opts = {"cache": True, "nogil": True}
        opts.update(kwargs)
        return numba.njit(**opts)(f)

    if func is None:
        return wrap
    return wrap(func)


def backend() -> str:
    return "numba" if ENABLED else "numpy"
