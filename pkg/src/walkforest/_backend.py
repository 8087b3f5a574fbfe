"""Numba acceleration toggle.

The hot kernels in :mod:`walkforest._kernels` are written as plain
numpy loops and compiled with ``numba.njit`` when available.  Setting
the environment variable ``WALKFOREST_NO_NUMBA=1`` (or numba being
missing) selects the pure-python fallback.  Both paths execute the
same source, so results are bit-identical either way.
"""

import os

_TRUTHY = ("1", "true", "yes", "on")

NUMBA_DISABLED = os.environ.get("WALKFOREST_NO_NUMBA", "").strip().lower() in _TRUTHY

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via WALKFOREST_NO_NUMBA instead
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not NUMBA_DISABLED


def jit(func):
    """Compile ``func`` with njit when enabled, otherwise return it unchanged."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func
