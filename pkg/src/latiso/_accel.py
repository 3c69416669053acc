"""Switch between numba-compiled kernels and the pure-numpy fallback.

Set ``LATISO_DISABLE_NUMBA=1`` before importing :mod:`latiso` to force the
numpy path (useful for debugging and for the kernel benchmark).
"""

import os

_FALSY = ("1", "true", "yes", "on")

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    _HAVE_NUMBA = False

NUMBA_ENABLED = _HAVE_NUMBA and os.environ.get("LATISO_DISABLE_NUMBA", "").lower() not in _FALSY


def njit(func):
    """Compile ``func`` in nopython mode when numba is available, else return it."""
    if _HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func
