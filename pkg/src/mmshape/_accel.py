"""Numba switch.

Set ``MMSHAPE_DISABLE_NUMBA=1`` before import to run every hot kernel through
its pure-numpy implementation.
"""
import os

DISABLE_ENV = "MMSHAPE_DISABLE_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get(DISABLE_ENV, "").lower() not in ("1", "true", "yes")


def njit(fn):
    """``numba.njit`` with numpy float semantics (x/0 gives inf) when available, else the plain function."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True, error_model="numpy")(fn)
