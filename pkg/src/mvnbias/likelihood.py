"""Log-likelihood, score, expected information and likelihood cumulants."""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NonPositiveDefinite
from .model import evaluate_derivatives, _raw_moments


@dataclass(frozen=True)
class State:
    """Moments and factorizations at one parameter value."""

    theta: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    sinv: np.ndarray
    logdet: np.ndarray
    resid: np.ndarray


def evaluate_state(spec, theta, data):
    theta = spec.check_domain(theta)
    mu, sigma = _raw_moments(spec, theta, data)
    sinv, logdet, bad = kernels.factor(sigma)
    if bad >= 0:
        raise NonPositiveDefinite(int(bad))
    return State(theta, mu, sigma, sinv, logdet, data.y - mu)


def _loglik(state):
    return kernels.loglik(state.resid, state.sinv, state.logdet)


def _score(state, bundle):
    u = state.resid
    tail = -(state.sigma - u[:, :, None] * u[:, None, :])
    return kernels.contract(state.sinv, bundle.a, bundle.C, u, tail)


def log_likelihood(spec, theta, data):
    """Gaussian log-likelihood without the ``-(nq/2) log 2 pi`` constant."""
    return _loglik(evaluate_state(spec, theta, data))


def score(spec, theta, data):
    state = evaluate_state(spec, theta, data)
    return _score(state, evaluate_derivatives(spec, state.theta, data))


def fisher_information(spec, theta, data):
    state = evaluate_state(spec, theta, data)
    bundle = evaluate_derivatives(spec, state.theta, data)
    return kernels.information(state.sinv, bundle.a, bundle.C)


def evaluate_all(spec, theta, data):
    """State, derivative bundle, log-likelihood, score and information in one pass."""
    state = evaluate_state(spec, theta, data)
    bundle = evaluate_derivatives(spec, state.theta, data)
    K = kernels.information(state.sinv, bundle.a, bundle.C)
    return state, bundle, _loglik(state), _score(state, bundle), K


@dataclass(frozen=True)
class ScoreSystem:
    """Blocked form of the weighted regression system ``(F, H, u~)``.

    ``D_tilde`` is the stacked ``(n*q, p)`` matrix of mean derivatives and
    ``V_blocks`` holds the covariance derivatives per observation.  The
    weights are represented by ``sigma_inv`` alone: the covariance rows
    carry the implicit weight ``(1/2) sigma_inv (x) sigma_inv``.
    """

    D_tilde: np.ndarray
    V_blocks: np.ndarray
    sigma_inv: np.ndarray
    u: np.ndarray
    u_tilde_tail: np.ndarray

    def weighted_cross(self, vm, vc):
        """``F' H v`` for ``v = (vm, vec vc)`` with ``vm`` (n, q) and ``vc`` (n, q, q)."""
        p = self.V_blocks.shape[0]
        n, q = self.u.shape
        a = self.D_tilde.T.reshape(p, n, q)
        return kernels.contract(self.sigma_inv, a, self.V_blocks, vm, vc)

    def information(self):
        p = self.V_blocks.shape[0]
        n, q = self.u.shape
        return kernels.information(self.sigma_inv, self.D_tilde.T.reshape(p, n, q), self.V_blocks)

    def score(self):
        return self.weighted_cross(self.u, self.u_tilde_tail)


def score_system(spec, theta, data):
    state = evaluate_state(spec, theta, data)
    bundle = evaluate_derivatives(spec, state.theta, data)
    u = state.resid
    return ScoreSystem(
        D_tilde=bundle.D_tilde(),
        V_blocks=bundle.C,
        sigma_inv=state.sinv,
        u=u,
        u_tilde_tail=-(state.sigma - u[:, :, None] * u[:, None, :]),
    )


@dataclass(frozen=True)
class CumulantSet:
    """Expected log-likelihood derivatives summed over the sample.

    ``kappa_sr[s, r]`` is ``E(d2 l / d s d r)``, ``kappa_tsr[t, s, r]`` the
    expected third derivative and ``kappa_ts_r[t, s, r]`` the derivative of
    ``kappa_ts`` with respect to parameter ``r``.
    """

    kappa_sr: np.ndarray
    kappa_tsr: np.ndarray
    kappa_ts_r: np.ndarray


def cumulants(spec, theta, data):
    """Cumulant arrays from the closed-form expectations.

    Cost is O(p^3 n q^3); intended for checking, not the fitting loop.
    """
    state = evaluate_state(spec, theta, data)
    b = evaluate_derivatives(spec, state.theta, data)
    S, Si = state.sigma, state.sinv
    a, a2, C, C2 = b.a, b.a2, b.C, b.C2
    A = -np.einsum("nij,rnjk,nkl->rnil", Si, C, Si)
    ein = np.einsum

    kappa_sr = 0.5 * ein("rnij,snji->sr", A, C) - ein("sni,nij,rnj->sr", a, Si, a)

    # tr(A_x S A_y C_z)
    ASAC = ein("xnij,njk,ynkl,znli->xyz", A, S, A, C)
    kappa_tsr = (
        ASAC.transpose(2, 1, 0)  # tr(A_r S A_s C_t) at [t, s, r]
        + ASAC.transpose(2, 0, 1)  # tr(A_s S A_r C_t)
        + 0.5
        * (
            ein("snij,trnji->tsr", A, C2)
            + ein("rnij,tsnji->tsr", A, C2)
            + ein("tnij,srnji->tsr", A, C2)
        )
        - (
            ein("tni,snij,rnj->tsr", a, A, a)
            + ein("sni,tnij,rnj->tsr", a, A, a)
            + ein("sni,rnij,tnj->tsr", a, A, a)
            + ein("tni,nij,srnj->tsr", a, Si, a2)
            + ein("tsni,nij,rnj->tsr", a2, Si, a)
            + ein("sni,nij,trnj->tsr", a, Si, a2)
        )
    )
    kappa_ts_r = (
        0.5
        * (
            ASAC.transpose(2, 1, 0)
            + ASAC.transpose(2, 0, 1)
            + ein("tnij,rsnji->tsr", A, C2)
            + ein("snij,rtnji->tsr", A, C2)
        )
        - (
            ein("rtni,nij,snj->tsr", a2, Si, a)
            + ein("tni,rnij,snj->tsr", a, A, a)
            + ein("tni,nij,rsnj->tsr", a, Si, a2)
        )
    )
    return CumulantSet(kappa_sr=kappa_sr, kappa_tsr=kappa_tsr, kappa_ts_r=kappa_ts_r)


def numerical_score(spec, theta, data, rel=1e-5):
    """Central-difference gradient of the log-likelihood, step ``rel * max(|theta_r|, 1)``."""
    theta = spec.check_domain(theta)
    grad = np.empty(spec.p)
    for r in range(spec.p):
        h = rel * max(abs(theta[r]), 1.0)
        while True:
            tp, tm = theta.copy(), theta.copy()
            tp[r] += h
            tm[r] -= h
            if spec.contains(tp) and spec.contains(tm):
                break
            h *= 0.5
        grad[r] = (log_likelihood(spec, tp, data) - log_likelihood(spec, tm, data)) / (2 * h)
    return grad
