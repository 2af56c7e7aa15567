"""Selection between numba-compiled kernels and the pure numpy fallback.

Set ``NORMSURF_DISABLE_NUMBA=1`` in the environment before import to force
the numpy path.  The flag is read once.
"""
import os

DISABLED = os.environ.get("NORMSURF_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    if DISABLED:
        raise ImportError
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def jit(func):
    """``numba.njit(cache=True)`` when available, identity otherwise."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def backend():
    return "numba" if HAVE_NUMBA else "numpy"
