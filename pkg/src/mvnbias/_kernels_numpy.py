"""Pure-numpy block kernels.

Array layout shared with the numba kernels::

    resid  (n, q)          sigma, sinv  (n, q, q)
    a      (p, n, q)       C            (p, n, q, q)
    a2     (p, p, n, q)    C2           (p, p, n, q, q)
"""
import numpy as np


def factor(sigma):
    """Return ``(sinv, logdet, bad)`` for a stack of covariance blocks.

    ``bad`` is the index of the first block that is not positive definite,
    or -1.  When ``bad >= 0`` the other outputs are meaningless.
    """
    n, q, _ = sigma.shape
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        for i in range(n):
            try:
                np.linalg.cholesky(sigma[i])
            except np.linalg.LinAlgError:
                return np.empty_like(sigma), np.empty(n), i
        return np.empty_like(sigma), np.empty(n), 0  # pragma: no cover
    diag = np.diagonal(chol, axis1=1, axis2=2)
    if np.any(diag <= 0.0):
        return np.empty_like(sigma), np.empty(n), int(np.argmax(np.any(diag <= 0.0, axis=1)))
    eye = np.broadcast_to(np.eye(q), sigma.shape)
    linv = np.linalg.solve(chol, eye)
    sinv = np.einsum("nki,nkj->nij", linv, linv)
    logdet = 2.0 * np.log(diag).sum(axis=1)
    return sinv, logdet, -1


def loglik(resid, sinv, logdet):
    quad = np.einsum("ni,nij,nj->", resid, sinv, resid)
    return -0.5 * logdet.sum() - 0.5 * quad


def contract(sinv, a, C, vm, vc):
    """Weighted cross-product ``F'H v`` for a structured vector ``v = (vm, vec vc)``."""
    w = np.einsum("nij,nj->ni", sinv, vm)
    m = np.einsum("nij,njk,nkl->nil", sinv, vc, sinv)
    return np.einsum("rni,ni->r", a, w) + 0.5 * np.einsum("rnjk,nkj->r", C, m)


def information(sinv, a, C):
    sa = np.einsum("nij,rnj->rni", sinv, a)
    sc = np.einsum("nij,rnjk->rnik", sinv, C)
    K = np.einsum("sni,rni->sr", a, sa) + 0.5 * np.einsum("snjk,rnkj->sr", sc, sc)
    return 0.5 * (K + K.T)


def xi_blocks(a, a2, C2, kinv):
    xm = -0.5 * np.einsum("srni,sr->ni", a2, kinv)
    outer = np.einsum("rni,snj,sr->nij", a, a, kinv)
    xc = -0.5 * (np.einsum("srnij,sr->nij", C2, kinv) + 2.0 * outer)
    return xm, xc
