"""Switch between numba-compiled kernels and the plain numpy path.

Set ``CORRCOX_DISABLE_NUMBA=1`` before import to run every kernel as ordinary
numpy code. The flag is read once, at import time.
"""

import os

_FLAG = os.environ.get("CORRCOX_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("1", "true", "yes", "on")


def jit(fn):
    """``numba.njit(cache=True, nogil=True)`` when enabled, identity otherwise."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
