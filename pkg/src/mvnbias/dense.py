"""Literal dense construction of the global regression system.

Builds the stacked ``F``, the weight matrix ``H`` with ``Sigma (x) Sigma``,
the ``Phi_r`` matrices including ``(I (x) a_r) D`` and solves the weighted
regressions with generic linear algebra.  Memory grows as ``(nq)^4``; use it
only on tiny problems as a reference for the blocked code.
"""
import numpy as np
from scipy.linalg import block_diag

from .likelihood import evaluate_state
from .model import evaluate_derivatives


def vec(M):
    """Column-stacking vec operator."""
    return np.asarray(M).reshape(-1, order="F")


def global_blockdiag(blocks):
    return block_diag(*blocks)


class DenseSystem:
    """Global ``F``, ``H``, ``u~`` and the ``Phi_r`` matrices at one ``theta``."""

    def __init__(self, spec, theta, data):
        state = evaluate_state(spec, theta, data)
        b = evaluate_derivatives(spec, state.theta, data)
        n, q, p = data.n, spec.q, spec.p
        N = n * q
        self.p, self.N = p, N
        Sigma = global_blockdiag(state.sigma)
        u = state.resid.reshape(-1)
        D = np.column_stack([b.a[r].reshape(-1) for r in range(p)])
        Cg = [global_blockdiag(b.C[r]) for r in range(p)]
        V = np.column_stack([vec(Cg[r]) for r in range(p)])
        Sigma_t = np.kron(Sigma, Sigma)
        H = np.linalg.inv(
            np.block([[Sigma, np.zeros((N, N * N))], [np.zeros((N * N, N)), 2.0 * Sigma_t]])
        )
        self.Sigma, self.D, self.V, self.H = Sigma, D, V, H
        self.F = np.vstack([D, V])
        self.u_tilde = np.concatenate([u, -vec(Sigma - np.outer(u, u))])
        self.Phi = []
        for r in range(p):
            G = np.vstack(
                [
                    np.column_stack([b.a2[s, r].reshape(-1) for s in range(p)]),
                    np.column_stack([vec(global_blockdiag(b.C2[s, r])) for s in range(p)]),
                ]
            )
            a_r = b.a[r].reshape(-1, 1)
            J = np.vstack([np.zeros((N, p)), 2.0 * np.kron(np.eye(N), a_r) @ D])
            self.Phi.append(-0.5 * (G + J))

    def score(self):
        return self.F.T @ self.H @ self.u_tilde

    def information(self):
        return self.F.T @ self.H @ self.F

    def xi(self):
        Kinv = np.linalg.inv(self.information())
        return np.hstack(self.Phi) @ vec(Kinv)

    def bias(self):
        """Weighted least-squares coefficients of ``xi`` on ``F``."""
        return np.linalg.solve(self.information(), self.F.T @ self.H @ self.xi())

    def irls_update(self, theta):
        """Weighted regression of ``F theta + u~`` on ``F``."""
        rhs = self.F @ np.asarray(theta, dtype=np.float64) + self.u_tilde
        return np.linalg.solve(self.information(), self.F.T @ self.H @ rhs)
