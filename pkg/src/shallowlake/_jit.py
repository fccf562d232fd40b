"""Numba switch.

Kernels are written as plain Python over numpy arrays. When numba is
importable and ``SHALLOWLAKE_NUMBA`` is not set to a false value, they are
compiled with ``numba.njit``; otherwise the same source runs interpreted.
"""

import os

_FALSE = {"0", "false", "no", "off"}

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

HAVE_NUMBA = numba is not None


def _enabled() -> bool:
    return HAVE_NUMBA and os.environ.get("SHALLOWLAKE_NUMBA", "1").strip().lower() not in _FALSE


#: read once at import; pass ``use_numba=`` to override per call
USE_NUMBA = _enabled()


def compile_kernel(fn):
    """Return the njit-compiled ``fn`` (cached on disk), or ``fn`` itself."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)

