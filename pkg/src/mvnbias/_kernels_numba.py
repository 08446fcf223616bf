"""Loop kernels compiled with numba; same contracts as ``_kernels_numpy``."""
import numpy as np

from ._jit import njit


@njit
def factor(sigma):
    n, q, _ = sigma.shape
    sinv = np.zeros((n, q, q))
    logdet = np.zeros(n)
    L = np.zeros((q, q))
    Li = np.zeros((q, q))
    for i in range(n):
        L[:, :] = 0.0
        for j in range(q):
            s = sigma[i, j, j]
            for k in range(j):
                s -= L[j, k] * L[j, k]
            if not s > 0.0:
                return sinv, logdet, i
            L[j, j] = np.sqrt(s)
            for m in range(j + 1, q):
                t = sigma[i, m, j]
                for k in range(j):
                    t -= L[m, k] * L[j, k]
                L[m, j] = t / L[j, j]
        # forward substitution for L^{-1}
        Li[:, :] = 0.0
        for c in range(q):
            Li[c, c] = 1.0 / L[c, c]
            for m in range(c + 1, q):
                t = 0.0
                for k in range(c, m):
                    t -= L[m, k] * Li[k, c]
                Li[m, c] = t / L[m, m]
        for j in range(q):
            for m in range(j, q):
                t = 0.0
                for k in range(m, q):
                    t += Li[k, j] * Li[k, m]
                sinv[i, j, m] = t
                sinv[i, m, j] = t
        ld = 0.0
        for j in range(q):
            ld += np.log(L[j, j])
        logdet[i] = 2.0 * ld
    return sinv, logdet, -1


@njit
def loglik(resid, sinv, logdet):
    n, q = resid.shape
    total = 0.0
    for i in range(n):
        quad = 0.0
        for j in range(q):
            for k in range(q):
                quad += resid[i, j] * sinv[i, j, k] * resid[i, k]
        total += -0.5 * logdet[i] - 0.5 * quad
    return total


@njit
def contract(sinv, a, C, vm, vc):
    p, n, q = a.shape
    out = np.zeros(p)
    w = np.zeros(q)
    tmp = np.zeros((q, q))
    m = np.zeros((q, q))
    for i in range(n):
        for j in range(q):
            t = 0.0
            for k in range(q):
                t += sinv[i, j, k] * vm[i, k]
            w[j] = t
        for j in range(q):
            for k in range(q):
                t = 0.0
                for l in range(q):
                    t += sinv[i, j, l] * vc[i, l, k]
                tmp[j, k] = t
        for j in range(q):
            for k in range(q):
                t = 0.0
                for l in range(q):
                    t += tmp[j, l] * sinv[i, l, k]
                m[j, k] = t
        for r in range(p):
            t = 0.0
            for j in range(q):
                t += a[r, i, j] * w[j]
            tr = 0.0
            for j in range(q):
                for k in range(q):
                    tr += C[r, i, j, k] * m[k, j]
            out[r] += t + 0.5 * tr
    return out


@njit
def information(sinv, a, C):
    p, n, q = a.shape
    K = np.zeros((p, p))
    sa = np.zeros((p, q))
    sc = np.zeros((p, q, q))
    for i in range(n):
        for r in range(p):
            for j in range(q):
                t = 0.0
                for k in range(q):
                    t += sinv[i, j, k] * a[r, i, k]
                sa[r, j] = t
                for l in range(q):
                    t = 0.0
                    for k in range(q):
                        t += sinv[i, j, k] * C[r, i, k, l]
                    sc[r, j, l] = t
        for s in range(p):
            for r in range(s, p):
                t = 0.0
                for j in range(q):
                    t += a[s, i, j] * sa[r, j]
                tr = 0.0
                for j in range(q):
                    for k in range(q):
                        tr += sc[s, j, k] * sc[r, k, j]
                K[s, r] += t + 0.5 * tr
    for s in range(p):
        for r in range(s + 1, p):
            K[r, s] = K[s, r]
    return K


@njit
def xi_blocks(a, a2, C2, kinv):
    p, n, q = a.shape
    xm = np.zeros((n, q))
    xc = np.zeros((n, q, q))
    for i in range(n):
        for s in range(p):
            for r in range(p):
                k = kinv[s, r]
                if k == 0.0:
                    continue
                for j in range(q):
                    xm[i, j] -= 0.5 * k * a2[s, r, i, j]
                    for l in range(q):
                        xc[i, j, l] -= 0.5 * k * (C2[s, r, i, j, l] + 2.0 * a[r, i, j] * a[s, i, l])
    return xm, xc
