"""Hot per-observation kernels, dispatched to numba or numpy.

The backend is fixed at import time by :data:`mvnbias._jit.USE_NUMBA`.
Both backends are importable directly (``numpy_backend``, ``numba_backend``)
so they can be compared against each other.
"""
import numpy as np

from . import _kernels_numpy as numpy_backend
from ._jit import HAVE_NUMBA, USE_NUMBA

if HAVE_NUMBA:
    from . import _kernels_numba as numba_backend
else:  # pragma: no cover
    numba_backend = None

_backend = numba_backend if USE_NUMBA else numpy_backend
BACKEND = "numba" if USE_NUMBA else "numpy"


def _c(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def factor(sigma):
    return _backend.factor(_c(sigma))


def loglik(resid, sinv, logdet):
    return float(_backend.loglik(_c(resid), _c(sinv), _c(logdet)))


def contract(sinv, a, C, vm, vc):
    return _backend.contract(_c(sinv), _c(a), _c(C), _c(vm), _c(vc))


def information(sinv, a, C):
    return _backend.information(_c(sinv), _c(a), _c(C))


def xi_blocks(a, a2, C2, kinv):
    return _backend.xi_blocks(_c(a), _c(a2), _c(C2), _c(kinv))
