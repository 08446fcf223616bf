"""Maximum likelihood by Fisher scoring.

The scoring update solves the weighted least-squares normal equations
``(F'HF) theta_new = F'H (F theta + u~)``, which rearrange to
``theta_new = theta + K^{-1} U``.  The rearranged form is what the loop
uses, because it admits a step-halving line search.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError, MVNBiasError, NoConvergence, SingularInformation, UnsupportedModel
from .likelihood import evaluate_all, evaluate_state, score_system
from .model import as_theta


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 200
    tol_param: float = 1e-8
    tol_score: float = 1e-6
    step_halving_max: int = 10
    start: object = "auto"

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not (self.tol_param > 0 and self.tol_score > 0):
            raise ValueError("tolerances must be positive")
        if self.step_halving_max < 0:
            raise ValueError("step_halving_max must be non-negative")


@dataclass(frozen=True)
class TraceEntry:
    theta: tuple
    loglik: float
    step_norm: float
    halvings: int


@dataclass(frozen=True)
class FitResult:
    theta_hat: np.ndarray
    information: np.ndarray
    cov_theta: np.ndarray
    std_errors: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    score: np.ndarray
    param_names: tuple
    trace: tuple = field(default=(), repr=False)

    def as_dict(self):
        return {name: float(v) for name, v in zip(self.param_names, self.theta_hat)}


def invert_information(K):
    """Inverse of a symmetric positive definite information matrix.

    Raises :class:`SingularInformation` if the Cholesky factorization fails.
    """
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        raise SingularInformation("expected information is not positive definite") from None
    Linv = np.linalg.solve(L, np.eye(K.shape[0]))
    Kinv = Linv.T @ Linv
    return 0.5 * (Kinv + Kinv.T)


def scaled_condition(K):
    """Condition number of ``K`` after symmetric diagonal equilibration."""
    d = np.sqrt(np.abs(np.diag(K)))
    if np.any(d == 0) or not np.all(np.isfinite(K)):
        return math.inf
    return float(np.linalg.cond(K / np.outer(d, d)))


def auto_start(spec, data):
    """Moment-based starting values for built-in models."""
    if spec.start_fn is None:
        raise UnsupportedModel(f"model {spec.name!r} has no automatic start; pass FitOptions(start=...)")
    return as_theta(spec.start_fn(data), spec.p)


def irls_update(spec, theta, data):
    """One scoring step written as the weighted regression of ``F theta + u~`` on ``F``."""
    system = score_system(spec, theta, data)
    K = system.information()
    theta = as_theta(theta, spec.p)
    # F theta + u~ in blocked form
    Ft_m = np.einsum("kr,r->k", system.D_tilde, theta).reshape(system.u.shape) + system.u
    Ft_c = np.einsum("rnij,r->nij", system.V_blocks, theta) + system.u_tilde_tail
    rhs = system.weighted_cross(Ft_m, Ft_c)
    return np.linalg.solve(K, rhs)


def _step_norm(step, theta):
    return float(np.linalg.norm(step) / (1.0 + np.linalg.norm(theta)))


def fit(spec, data, options=None):
    """Fit ``spec`` to ``data`` by Fisher scoring with step halving.

    Each iteration proposes ``K^{-1} U`` and halves it until the
    log-likelihood does not decrease and the iterate stays in the domain.
    Convergence needs both the relative step norm below ``tol_param`` and
    ``max|U| <= tol_score * sqrt(n)``.
    """
    options = options or FitOptions()
    if isinstance(options.start, str):
        if options.start != "auto":
            raise ValueError(f"unknown start option {options.start!r}")
        theta = auto_start(spec, data)
    else:
        theta = as_theta(options.start, spec.p)
    if not spec.contains(theta):
        raise DomainError(f"starting value {theta.tolist()} is outside the domain")

    score_tol = options.tol_score * math.sqrt(data.n)
    state, bundle, ll, U, K = evaluate_all(spec, theta, data)
    trace = [TraceEntry(tuple(theta.tolist()), ll, float("nan"), 0)]
    converged = False
    it = 0
    for it in range(1, options.max_iter + 1):
        Kinv = invert_information(K)
        step = Kinv @ U
        norm = _step_norm(step, theta)
        if norm <= options.tol_param and np.max(np.abs(U)) <= score_tol:
            converged = True
            it -= 1
            break
        frac = 1.0
        accepted = None
        for halvings in range(options.step_halving_max + 1):
            cand = theta + frac * step
            if spec.contains(cand):
                try:
                    st = evaluate_state(spec, cand, data)
                    new_ll = kernels.loglik(st.resid, st.sinv, st.logdet)
                except MVNBiasError:
                    new_ll = None
                if new_ll is not None and new_ll >= ll:
                    accepted = (cand, halvings)
                    break
            frac *= 0.5
        if accepted is None:
            if np.max(np.abs(U)) <= score_tol:
                # no ascent left at rounding level
                converged = True
                it -= 1
                break
            raise NoConvergence(
                f"line search failed at iteration {it}: no increase after {options.step_halving_max} halvings",
                trace,
            )
        theta, halvings = accepted
        state, bundle, ll, U, K = evaluate_all(spec, theta, data)
        trace.append(TraceEntry(tuple(theta.tolist()), ll, _step_norm(frac * step, theta), halvings))
    if not converged:
        raise NoConvergence(f"no convergence after {options.max_iter} iterations", trace)

    cov = invert_information(K)
    return FitResult(
        theta_hat=theta,
        information=K,
        cov_theta=cov,
        std_errors=np.sqrt(np.diag(cov)),
        loglik=ll,
        iterations=it,
        converged=True,
        score=U,
        param_names=tuple(spec.param_names),
        trace=tuple(trace),
    )

