"""Optional numba acceleration.

Set ``MVNBIAS_DISABLE_JIT=1`` before import to force the pure-numpy kernels.
If numba cannot be imported the numpy kernels are used as well.
"""
import logging
import os

logger = logging.getLogger(__name__)

_FLAG = "MVNBIAS_DISABLE_JIT"


def _env_disabled():
    return os.environ.get(_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _env_disabled()

if HAVE_NUMBA:
    logging.getLogger("numba").setLevel(logging.WARNING)


def njit(func):
    """Compile ``func`` with numba in nopython mode, or return it unchanged."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)
