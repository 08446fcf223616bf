"""Monte Carlo study of the MLE and the bias-corrected estimator.

Every replication draws from its own generator, seeded from
``(seed, n, replication index)``, so results do not depend on the order in
which replications run or on how many worker processes share them.
"""
import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bias import bias_vector
from .errors import MVNBiasError, TooManyFailures
from .estimator import fit
from .model import Dataset, as_theta, evaluate_moments
from .models import builtin

FAILURE_CEILING = 0.10
_Z_STREAM = 0
_REP_STREAM = 1


@dataclass(frozen=True)
class SimDesign:
    model: str
    theta_true: np.ndarray
    sample_sizes: tuple
    replications: int
    seed: int
    constants: dict = field(default_factory=dict)
    failure_policy: str = "drop-and-count"
    z_range: tuple = (-1.0, 1.0)

    def __post_init__(self):
        spec = self.spec()
        object.__setattr__(self, "theta_true", as_theta(self.theta_true, spec.p))
        spec.check_domain(self.theta_true)
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if any(n < spec.p + 1 for n in self.sample_sizes):
            raise ValueError(f"sample sizes must be at least p+1 = {spec.p + 1}")
        if self.failure_policy != "drop-and-count":
            raise ValueError(f"unsupported failure policy {self.failure_policy!r}")

    def spec(self):
        return builtin(self.model, self.constants)


def load_design(path):
    """Read a study design from a JSON file.

    ``theta_true`` may be a list in parameter order or a mapping from
    parameter names to values.
    """
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    return design_from_dict(cfg)


def design_from_dict(cfg):
    cfg = dict(cfg)
    model = cfg["model"]
    constants = {k: float(v) for k, v in cfg.get("constants", {}).items()}
    theta = cfg["theta_true"]
    if isinstance(theta, dict):
        names = builtin(model, constants).param_names
        missing = [nm for nm in names if nm not in theta]
        if missing:
            raise KeyError(f"theta_true is missing {', '.join(missing)}")
        theta = [theta[nm] for nm in names]
    return SimDesign(
        model=model,
        theta_true=np.asarray(theta, dtype=np.float64),
        sample_sizes=tuple(cfg["sample_sizes"]),
        replications=int(cfg["replications"]),
        seed=int(cfg["seed"]),
        constants=constants,
        failure_policy=cfg.get("failure_policy", "drop-and-count"),
        z_range=tuple(cfg.get("z_range", (-1.0, 1.0))),
    )


def rng_for(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key)))


def simulate_dataset(spec, theta_true, n, rng, z=None, covariates=None, covariate_names=()):
    """Draw one dataset of size ``n`` from a model at ``theta_true``.

    The errors-in-variables models are drawn through their latent
    structure (true covariate, equation error, measurement error) and the
    heteroscedastic one needs the known covariate ``z``.  Other models are
    drawn from their normal moments given ``covariates``.
    """
    theta = spec.check_domain(theta_true)
    if spec.name == "eiv":
        alpha, beta, mu_x, sx2, s2 = theta
        su2 = spec.known_constants["sigma_u2"]
        x = rng.normal(mu_x, math.sqrt(sx2), n)
        e = rng.normal(0.0, math.sqrt(s2), n)
        u = rng.normal(0.0, math.sqrt(su2), n)
        return Dataset(np.column_stack([alpha + beta * x + e, x + u]))
    if spec.name == "eiv-hetero":
        alpha, beta, gamma, mu_x, sx2, s2, eta = theta
        su2 = spec.known_constants["sigma_u2"]
        if z is None:
            raise ValueError("the heteroscedastic model needs the covariate z")
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        x = rng.normal(mu_x, math.sqrt(sx2), n)
        e = rng.normal(0.0, 1.0, n) * np.sqrt(s2 * np.exp(eta * z))
        u = rng.normal(0.0, math.sqrt(su2), n)
        y = alpha + beta * x + np.exp(gamma * z) + e
        return Dataset(np.column_stack([y, x + u]), covariates=z[:, None], covariate_names=("z",))
    template = Dataset(np.zeros((n, spec.q)), covariates=covariates, covariate_names=covariate_names)
    mu, sigma = evaluate_moments(spec, theta, template)
    L = np.linalg.cholesky(sigma)
    y = mu + np.einsum("nij,nj->ni", L, rng.standard_normal((n, spec.q)))
    return Dataset(y, covariates=template.covariates, covariate_names=template.covariate_names)


def design_covariate(design, n):
    """Fixed covariate for sample size ``n`` (heteroscedastic model only)."""
    if design.model != "eiv-hetero":
        return None
    lo, hi = design.z_range
    return rng_for(design.seed, n, _Z_STREAM, 0).uniform(lo, hi, n)


def replicate(design, n, rep, spec=None):
    """One replication; returns ``(mle, bce)`` or ``None`` if the fit failed."""
    spec = spec or design.spec()
    rng = rng_for(design.seed, n, _REP_STREAM, rep)
    data = simulate_dataset(spec, design.theta_true, n, rng, z=design_covariate(design, n))
    try:
        result = fit(spec, data)
        b = bias_vector(spec, result.theta_hat, data)
    except MVNBiasError:
        return None
    if not np.all(np.isfinite(b)):
        return None
    return result.theta_hat, result.theta_hat - b


def _replicate_task(args):
    design, n, rep = args
    return replicate(design, n, rep)


@dataclass(frozen=True)
class SimRow:
    n: int
    parameter: str
    estimator: str
    rel_bias: float
    rmse: float
    mc_std_error: float
    n_failed: int


@dataclass(frozen=True)
class SimResult:
    rows: tuple

    def cell(self, n, parameter, estimator):
        for row in self.rows:
            if row.n == n and row.parameter == parameter and row.estimator == estimator:
                return row
        raise KeyError((n, parameter, estimator))


def aggregate(estimates, theta_true):
    """Relative bias, root mean squared error and MC standard error of the relative bias.

    ``estimates`` is ``(R, p)``; the reduction runs over axis 0 in a fixed order.
    """
    est = np.asarray(estimates, dtype=np.float64)
    R = est.shape[0]
    err = est - theta_true
    rel_bias = err.mean(axis=0) / theta_true
    rmse = np.sqrt(np.mean(err**2, axis=0))
    if R > 1:
        mc_se = est.std(axis=0, ddof=1) / math.sqrt(R) / np.abs(theta_true)
    else:
        mc_se = np.full(est.shape[1], math.nan)
    return rel_bias, rmse, mc_se


def run_study(design, workers=1):
    """Run every replication at every sample size and aggregate per cell."""
    spec = design.spec()
    rows = []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for n in design.sample_sizes:
            tasks = [(design, n, rep) for rep in range(design.replications)]
            if pool is None:
                outcomes = [replicate(design, n, rep, spec) for _, _, rep in tasks]
            else:
                chunk = max(1, len(tasks) // (4 * workers))
                outcomes = list(pool.map(_replicate_task, tasks, chunksize=chunk))
            ok = [o for o in outcomes if o is not None]
            failed = len(outcomes) - len(ok)
            if failed > FAILURE_CEILING * design.replications:
                raise TooManyFailures(n, failed, design.replications)
            for label, idx in (("MLE", 0), ("BCE", 1)):
                est = np.array([o[idx] for o in ok]).reshape(len(ok), spec.p)
                rb, rmse, se = aggregate(est, design.theta_true)
                for k, name in enumerate(spec.param_names):
                    rows.append(SimRow(n, name, label, float(rb[k]), float(rmse[k]), float(se[k]), failed))
    finally:
        if pool is not None:
            pool.shutdown()
    # rows ordered by n, then parameter, then MLE before BCE
    order = {name: k for k, name in enumerate(spec.param_names)}
    rows.sort(key=lambda r: (design.sample_sizes.index(r.n), order[r.parameter], r.estimator != "MLE"))
    return SimResult(tuple(rows))


CSV_FIELDS = ("n", "parameter", "estimator", "rel_bias", "rmse", "mc_std_error", "n_failed")


def summarize(result, fmt="csv"):
    """Render a result as CSV (full precision) or an aligned text table."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for r in result.rows:
            writer.writerow([r.n, r.parameter, r.estimator, repr(r.rel_bias), repr(r.rmse), repr(r.mc_std_error), r.n_failed])
        return buf.getvalue()
    if fmt == "text":
        header = f"{'n':>5}  {'parameter':<10} {'estimator':<9} {'rel_bias':>10} {'sqrt_mse':>10} {'mc_se':>8} {'failed':>6}"
        lines = [header]
        for r in result.rows:
            lines.append(
                f"{r.n:>5}  {r.parameter:<10} {r.estimator:<9} {r.rel_bias:>10.4f} {r.rmse:>10.2f} "
                f"{r.mc_std_error:>8.4f} {r.n_failed:>6}"
            )
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def parse_csv(text):
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_FIELDS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    rows = [
        SimRow(
            int(d["n"]),
            d["parameter"],
            d["estimator"],
            float(d["rel_bias"]),
            float(d["rmse"]),
            float(d["mc_std_error"]),
            int(d["n_failed"]),
        )
        for d in reader
    ]
    return SimResult(tuple(rows))
