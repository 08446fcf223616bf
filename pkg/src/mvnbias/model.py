"""Model abstraction: a normal model whose mean and covariance share parameters.

Everything is stored per observation.  The mean is an ``(n, q)`` array whose
row ``i`` is ``mu_i(theta)``; flattening it in C order gives the stacked
mean vector ``vec(mu_1, ..., mu_n)``.  The covariance is an ``(n, q, q)``
stack of blocks; the dense block-diagonal matrix is never formed.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .errors import DimensionMismatch, DomainError, NonPositiveDefinite

FD_REL_STEP = 1e-6
FD_REL_STEP_SECOND = 1e-4
FD_MAX_HALVINGS = 3


def as_theta(values, p=None):
    """Validate and return a parameter vector as a fresh float array."""
    theta = np.array(values, dtype=np.float64).reshape(-1)
    if theta.size < 1:
        raise DimensionMismatch("theta must have at least one entry")
    if p is not None and theta.size != p:
        raise DimensionMismatch(f"theta has {theta.size} entries, model expects {p}")
    if not np.all(np.isfinite(theta)):
        raise DomainError("theta has non-finite entries")
    return theta


def _frozen(x):
    x = np.array(x, dtype=np.float64)
    x.setflags(write=False)
    return x


@dataclass(frozen=True)
class Dataset:
    """Responses ``y`` (n x q) and optional covariates (n x m)."""

    y: np.ndarray
    covariates: Optional[np.ndarray] = None
    covariate_names: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2 or y.shape[0] < 1 or y.shape[1] < 1:
            raise DimensionMismatch(f"y must be a non-empty n x q matrix, got shape {y.shape}")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains missing or non-finite values")
        object.__setattr__(self, "y", _frozen(y))
        if self.covariates is not None:
            cov = np.asarray(self.covariates, dtype=np.float64)
            if cov.ndim == 1:
                cov = cov[:, None]
            if cov.shape[0] != y.shape[0]:
                raise DimensionMismatch("covariates and y have different row counts")
            if not np.all(np.isfinite(cov)):
                raise ValueError("covariates contain missing or non-finite values")
            object.__setattr__(self, "covariates", _frozen(cov))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def q(self):
        return self.y.shape[1]

    def covariate(self, name):
        """Column of covariates by name."""
        if self.covariates is None or name not in self.covariate_names:
            raise KeyError(f"dataset has no covariate {name!r}")
        return self.covariates[:, self.covariate_names.index(name)]


@dataclass(frozen=True)
class ModelSpec:
    """Mean and covariance functions sharing a parameter vector.

    ``mean_fn(theta, data)`` returns an ``(n, q)`` array and ``cov_fn(theta, data)``
    an ``(n, q, q)`` stack.  The optional derivative suppliers return
    ``(a, C)`` with shapes ``(p, n, q)``, ``(p, n, q, q)`` and ``(a2, C2)``
    with shapes ``(p, p, n, q)``, ``(p, p, n, q, q)``.  Missing suppliers are
    replaced by central finite differences.
    """

    name: str
    p: int
    q: int
    param_names: tuple
    mean_fn: Callable
    cov_fn: Callable
    first_derivs: Optional[Callable] = None
    second_derivs: Optional[Callable] = None
    in_domain: Optional[Callable] = None
    start_fn: Optional[Callable] = None
    known_constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.param_names) != self.p:
            raise DimensionMismatch("param_names must have length p")

    def check_domain(self, theta):
        theta = as_theta(theta, self.p)
        if self.in_domain is not None and not self.in_domain(theta):
            raise DomainError(f"theta={theta.tolist()} is outside the domain of model {self.name!r}")
        return theta

    def contains(self, theta):
        try:
            self.check_domain(theta)
        except DomainError:
            return False
        return True


@dataclass(frozen=True)
class DerivativeBundle:
    """First and second parameter derivatives of the mean and covariance."""

    a: np.ndarray
    a2: np.ndarray
    C: np.ndarray
    C2: np.ndarray

    @property
    def p(self):
        return self.a.shape[0]

    @property
    def n(self):
        return self.a.shape[1]

    @property
    def q(self):
        return self.a.shape[2]

    def a_vec(self, r):
        """Stacked (n*q) mean derivative for parameter r."""
        return self.a[r].reshape(-1)

    def D_tilde(self):
        """(n*q) x p matrix whose columns are the stacked mean derivatives."""
        return self.a.reshape(self.p, -1).T


def evaluate_moments(spec, theta, data):
    """Mean ``(n, q)`` and covariance blocks ``(n, q, q)`` at ``theta``.

    Raises :class:`NonPositiveDefinite` naming the first failing block.
    """
    mu, sigma = _raw_moments(spec, spec.check_domain(theta), data)
    _, _, bad = kernels.factor(sigma)
    if bad >= 0:
        raise NonPositiveDefinite(int(bad))
    return mu, sigma


def _raw_moments(spec, theta, data):
    with np.errstate(all="ignore"):
        mu = np.asarray(spec.mean_fn(theta, data), dtype=np.float64)
        sigma = np.asarray(spec.cov_fn(theta, data), dtype=np.float64)
    n, q = data.n, spec.q
    if mu.shape != (n, q) or sigma.shape != (n, q, q):
        raise DimensionMismatch(
            f"model {spec.name!r} returned mean {mu.shape} and covariance {sigma.shape}, "
            f"expected {(n, q)} and {(n, q, q)}"
        )
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
        raise DomainError(f"mean or covariance undefined at theta={theta.tolist()}")
    return mu, sigma


def fd_steps(theta, rel=FD_REL_STEP):
    return np.maximum(rel, rel * np.abs(theta))


def _perturbed(spec, theta, r, h, fn):
    """Evaluate ``fn`` at theta +/- h e_r, halving h near the domain boundary."""
    for _ in range(FD_MAX_HALVINGS + 1):
        tp = theta.copy()
        tm = theta.copy()
        tp[r] += h
        tm[r] -= h
        if spec.contains(tp) and spec.contains(tm):
            try:
                return fn(tp), fn(tm), h
            except DomainError:
                pass
        h *= 0.5
    raise DomainError(f"finite-difference step for parameter {spec.param_names[r]!r} leaves the domain")


def _fd_first(spec, theta, data, rel=FD_REL_STEP):
    p = spec.p
    a = np.empty((p, data.n, spec.q))
    C = np.empty((p, data.n, spec.q, spec.q))

    def moments(t):
        return _raw_moments(spec, t, data)

    for r, h in enumerate(fd_steps(theta, rel)):
        (mp, sp), (mm, sm), h = _perturbed(spec, theta, r, h, moments)
        a[r] = (mp - mm) / (2 * h)
        C[r] = (sp - sm) / (2 * h)
    return a, C


def _fd_of_first(spec, theta, data):
    """Second derivatives as central differences of the analytic first derivatives."""
    p = spec.p
    a2 = np.empty((p, p, data.n, spec.q))
    C2 = np.empty((p, p, data.n, spec.q, spec.q))

    def first(t):
        return spec.first_derivs(t, data)

    for s, h in enumerate(fd_steps(theta)):
        (ap, cp), (am, cm), h = _perturbed(spec, theta, s, h, first)
        a2[s] = (np.asarray(ap) - np.asarray(am)) / (2 * h)
        C2[s] = (np.asarray(cp) - np.asarray(cm)) / (2 * h)
    return _symmetrize_pairs(a2), _symmetrize_pairs(C2)


def _fd_second(spec, theta, data):
    """Second derivatives from second differences of the mean and covariance."""
    p = spec.p
    a2 = np.zeros((p, p, data.n, spec.q))
    C2 = np.zeros((p, p, data.n, spec.q, spec.q))
    steps = fd_steps(theta, FD_REL_STEP_SECOND)

    def moments(t):
        return _raw_moments(spec, t, data)

    mu0, s0 = moments(theta)
    for r in range(p):
        (mp, sp), (mm, sm), h = _perturbed(spec, theta, r, steps[r], moments)
        a2[r, r] = (mp - 2 * mu0 + mm) / h**2
        C2[r, r] = (sp - 2 * s0 + sm) / h**2
        steps[r] = h
    for r in range(p):
        for s in range(r + 1, p):
            vals = []
            for dr, ds in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                t = theta.copy()
                t[r] += dr * steps[r]
                t[s] += ds * steps[s]
                if not spec.contains(t):
                    raise DomainError("second-difference stencil leaves the domain")
                vals.append(moments(t))
            denom = 4 * steps[r] * steps[s]
            a2[r, s] = a2[s, r] = (vals[0][0] - vals[1][0] - vals[2][0] + vals[3][0]) / denom
            C2[r, s] = C2[s, r] = (vals[0][1] - vals[1][1] - vals[2][1] + vals[3][1]) / denom
    return a2, C2


def _symmetrize_pairs(x):
    return 0.5 * (x + np.swapaxes(x, 0, 1))


def evaluate_derivatives(spec, theta, data, *, force_fd=False):
    """Derivative bundle at ``theta``.

    Analytic suppliers are used when the spec has them.  Otherwise first
    derivatives come from central differences of the moments, and second
    derivatives from central differences of the (analytic or numerical)
    first derivatives.
    """
    theta = spec.check_domain(theta)
    n, q, p = data.n, spec.q, spec.p
    use_first = spec.first_derivs is not None and not force_fd
    use_second = spec.second_derivs is not None and not force_fd
    if use_first:
        a, C = (np.asarray(x, dtype=np.float64) for x in spec.first_derivs(theta, data))
    else:
        a, C = _fd_first(spec, theta, data)
    if use_second:
        a2, C2 = (np.asarray(x, dtype=np.float64) for x in spec.second_derivs(theta, data))
    elif use_first:
        a2, C2 = _fd_of_first(spec, theta, data)
    else:
        a2, C2 = _fd_second(spec, theta, data)
    expected = ((p, n, q), (p, p, n, q), (p, n, q, q), (p, p, n, q, q))
    for arr, shape, label in zip((a, a2, C, C2), expected, ("a", "a2", "C", "C2")):
        if arr.shape != shape:
            raise DimensionMismatch(f"derivative {label} has shape {arr.shape}, expected {shape}")
    return DerivativeBundle(a=a, a2=a2, C=C, C2=C2)


def relative_error(x, ref):
    """Per-parameter normwise relative error and the location of the worst entry.

    Entries are compared on the scale of the largest reference entry for the
    same leading parameter index (or of the whole array if that slice is zero).
    """
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    diff = np.abs(x - ref)
    lead = ref.reshape(ref.shape[0], -1) if ref.ndim > 1 else ref.reshape(-1, 1)
    scale = np.abs(lead).max(axis=1)
    overall = max(np.abs(ref).max(initial=0.0), np.abs(x).max(initial=0.0))
    scale = np.where(scale > 0, scale, overall if overall > 0 else 1.0)
    scale = scale.reshape((-1,) + (1,) * (ref.ndim - 1))
    rel = diff / scale
    if rel.size == 0:
        return 0.0, ()
    loc = np.unravel_index(int(np.argmax(rel)), rel.shape)
    return float(rel[loc]), tuple(int(k) for k in loc)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    max_errors: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.violations

    def __str__(self):
        lines = [f"{k}: max relative error {v:.3e}" for k, v in self.max_errors.items()]
        lines += [f"VIOLATION: {v}" for v in self.violations]
        return "\n".join(lines) if lines else "no checks run"


def validate_spec(spec, theta, data, tol=1e-4):
    """Check symmetry, positive definiteness and analytic derivatives of a spec.

    Never raises for model defects; everything found is listed in the report.
    """
    report = ValidationReport()
    try:
        theta = spec.check_domain(theta)
        mu, sigma = _raw_moments(spec, theta, data)
    except (DomainError, DimensionMismatch) as exc:
        report.violations.append(f"moments: {exc}")
        return report

    asym = np.abs(sigma - np.swapaxes(sigma, 1, 2)).max()
    scale = max(np.abs(sigma).max(), 1e-300)
    report.max_errors["sigma symmetry"] = float(asym / scale)
    if asym > 1e-12 * scale:
        i = int(np.argmax(np.abs(sigma - np.swapaxes(sigma, 1, 2)).reshape(data.n, -1).max(axis=1)))
        report.violations.append(f"symmetry: covariance block {i} is not symmetric")
    _, _, bad = kernels.factor(0.5 * (sigma + np.swapaxes(sigma, 1, 2)))
    if bad >= 0:
        report.violations.append(f"positive definiteness: covariance block {bad} fails Cholesky")

    try:
        bundle = evaluate_derivatives(spec, theta, data)
    except (DomainError, DimensionMismatch) as exc:
        report.violations.append(f"derivatives: {exc}")
        return report

    for label, arr in (("C", bundle.C), ("C2", bundle.C2)):
        if np.abs(arr - np.swapaxes(arr, -1, -2)).max() > 1e-12 * max(np.abs(arr).max(), 1.0):
            report.violations.append(f"symmetry: {label} has non-symmetric blocks")
    for label, arr in (("a2", bundle.a2), ("C2", bundle.C2)):
        if not np.array_equal(arr, np.swapaxes(arr, 0, 1)):
            report.violations.append(f"symmetry: {label}[s][r] != {label}[r][s]")

    checks = []
    try:
        if spec.first_derivs is not None:
            a_fd, C_fd = _fd_first(spec, theta, data)
            checks += [("a", bundle.a, a_fd), ("C", bundle.C, C_fd)]
        if spec.second_derivs is not None:
            if spec.first_derivs is not None:
                a2_fd, C2_fd = _fd_of_first(spec, theta, data)
            else:
                a2_fd, C2_fd = _fd_second(spec, theta, data)
            checks += [("a2", bundle.a2, a2_fd), ("C2", bundle.C2, C2_fd)]
    except DomainError as exc:
        report.violations.append(f"finite differences: {exc}")
    for label, analytic, numeric in checks:
        err, loc = relative_error(analytic, numeric)
        report.max_errors[label] = err
        if err > tol:
            names = [spec.param_names[k] for k in loc[: 2 if label.endswith("2") else 1]]
            report.violations.append(
                f"derivative {label}: relative error {err:.3e} at index {loc} (parameters {', '.join(names)})"
            )
    return report
