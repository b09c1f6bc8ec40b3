"""Optional numba acceleration.

Set ``DIRECT_IMAGE_DISABLE_NUMBA=1`` to force the pure-numpy kernels.
"""

import logging
import os

_DISABLED = os.environ.get("DIRECT_IMAGE_DISABLE_NUMBA", "0").lower() in ("1", "true", "yes")

try:
    import numba

    logging.getLogger("numba").setLevel(logging.WARNING)
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED


def njit(func):
    """``numba.njit(cache=True)`` when numba is usable, identity otherwise."""
    if not NUMBA_AVAILABLE:
        return func
    return numba.njit(cache=True)(func)
