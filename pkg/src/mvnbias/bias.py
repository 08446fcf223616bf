"""Second-order bias of the maximum likelihood estimator.

The bias is the vector of weighted least-squares coefficients from
regressing a structured response ``xi`` on the columns of ``F`` with
weights ``H`` (the same design and weights that define the information).
``cox_snell_oracle`` evaluates the classical triple sum over likelihood
cumulants instead and is kept as an independent check.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionMismatch, SingularInformation
from .estimator import FitOptions, fit, invert_information, scaled_condition
from .likelihood import cumulants, evaluate_state
from .model import evaluate_derivatives

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class StructuredVector:
    """Per-observation blocks of a vector ``(m, vec c)`` in the regression space.

    ``mean`` has shape ``(n, q)``.  ``cov`` holds the diagonal ``q x q``
    blocks of the covariance part; off-diagonal blocks are annihilated by
    the block-diagonal weights and are not stored.
    """

    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class BiasReport:
    theta_hat: np.ndarray
    bias: np.ndarray
    theta_corrected: np.ndarray
    phi_norms: np.ndarray
    method: str
    param_names: tuple = ()

    def as_dict(self):
        return {
            name: {"mle": float(t), "bias": float(b), "bce": float(c)}
            for name, t, b, c in zip(self.param_names, self.theta_hat, self.bias, self.theta_corrected)
        }


def phi_vector_product(bundle, kinv):
    """``xi = sum_r Phi_r kinv[:, r]`` without forming any ``Phi_r``."""
    kinv = np.asarray(kinv, dtype=np.float64)
    if kinv.shape != (bundle.p, bundle.p):
        raise DimensionMismatch(f"kinv has shape {kinv.shape}, expected {(bundle.p, bundle.p)}")
    xm, xc = kernels.xi_blocks(bundle.a, bundle.a2, bundle.C2, kinv)
    return StructuredVector(mean=xm, cov=xc)


def _check_condition(K):
    cond = scaled_condition(K)
    if not cond <= MAX_CONDITION:
        raise SingularInformation(f"information is too ill-conditioned for a bias correction (cond={cond:.3g})")


def _phi_norms(bundle, kinv):
    """Euclidean norm of each parameter's contribution ``Phi_r kinv[:, r]``."""
    norms = np.empty(bundle.p)
    for r in range(bundle.p):
        k = np.zeros_like(kinv)
        k[:, r] = kinv[:, r]
        xm, xc = kernels.xi_blocks(bundle.a, bundle.a2, bundle.C2, k)
        norms[r] = np.sqrt(np.sum(xm**2) + np.sum(xc**2))
    return norms


def _bias_parts(spec, theta, data):
    state = evaluate_state(spec, theta, data)
    bundle = evaluate_derivatives(spec, state.theta, data)
    K = kernels.information(state.sinv, bundle.a, bundle.C)
    _check_condition(K)
    kinv = invert_information(K)
    xi = phi_vector_product(bundle, kinv)
    rhs = kernels.contract(state.sinv, bundle.a, bundle.C, xi.mean, xi.cov)
    return state, bundle, kinv, kinv @ rhs


def bias_vector(spec, theta, data):
    """Order ``1/n`` bias of the MLE evaluated at ``theta``."""
    return _bias_parts(spec, theta, data)[3]


def cox_snell_oracle(spec, theta, data):
    """Bias from the literal cumulant triple sum.

    ``B_a = sum_{t,s,r} k^{a,t} k^{s,r} (kappa_ts^(r) - kappa_tsr / 2)``.
    """
    cs = cumulants(spec, theta, data)
    K = -cs.kappa_sr
    K = 0.5 * (K + K.T)
    _check_condition(K)
    kinv = invert_information(K)
    w = cs.kappa_ts_r - 0.5 * cs.kappa_tsr
    return kinv @ np.einsum("tsr,sr->t", w, kinv)


def bias_report(spec, theta_hat, data, method="matrix"):
    theta_hat = spec.check_domain(theta_hat)
    if method == "matrix":
        _, bundle, kinv, bias = _bias_parts(spec, theta_hat, data)
        norms = _phi_norms(bundle, kinv)
    elif method == "cox-snell-oracle":
        bias = cox_snell_oracle(spec, theta_hat, data)
        norms = np.full(spec.p, np.nan)
    else:
        raise ValueError(f"unknown bias method {method!r}")
    return BiasReport(
        theta_hat=theta_hat,
        bias=bias,
        theta_corrected=theta_hat - bias,
        phi_norms=norms,
        method=method,
        param_names=tuple(spec.param_names),
    )


def corrected_fit(spec, data, options=None):
    """Fit by maximum likelihood, then subtract the estimated bias once."""
    result = fit(spec, data, options or FitOptions())
    return result, bias_report(spec, result.theta_hat, data)
