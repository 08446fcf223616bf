import numpy as np
import pytest

from mvnbias import Dataset, ModelSpec, fuller_data, hetero_eiv, simple_eiv
from mvnbias.models import exponential_model, linear_model
from mvnbias.simulation import simulate_dataset

TRUE_THETA = np.array([67.0, 0.42, 70.0, 247.0, 43.0])
SIGMA_U2 = 57.0

# published 4-decimal estimates for the Fuller corn yield / soil nitrogen data
FULLER_MLE = np.array([66.8606, 0.4331, 70.6364, 220.1405, 38.4058])
FULLER_SE = np.array([11.7272, 0.1633, 5.0194, 118.1731, 20.9357])
FULLER_BIAS = np.array([-2.5334, 0.0359, 0.0000, -25.1946, -10.3344])
FULLER_BCE = np.array([69.3939, 0.3973, 70.6364, 245.3351, 48.7402])


@pytest.fixture
def fuller():
    return fuller_data()


@pytest.fixture
def eiv():
    return simple_eiv(SIGMA_U2)


def random_eiv_theta(rng):
    return np.array(
        [rng.uniform(-10, 10), rng.uniform(-2, 2), rng.uniform(-5, 5), rng.uniform(0.5, 3), rng.uniform(0.5, 3)]
    )


def random_hetero_theta(rng):
    return np.array(
        [
            rng.uniform(-5, 5),
            rng.uniform(-2, 2),
            rng.uniform(-1, 1),
            rng.uniform(-5, 5),
            rng.uniform(0.5, 3),
            rng.uniform(0.5, 3),
            rng.uniform(-1, 1),
        ]
    )


def random_uninl_theta(rng):
    return np.array([rng.uniform(0.5, 3), rng.uniform(-2, 1), rng.uniform(0.2, 2)])


def builtin_case(name, n, rng):
    """(spec, theta, data) for a built-in model at a random in-domain point."""
    if name == "eiv":
        spec = simple_eiv(1.0)
        theta = random_eiv_theta(rng)
        return spec, theta, simulate_dataset(spec, theta, n, rng)
    if name == "eiv-hetero":
        spec = hetero_eiv(1.0)
        theta = random_hetero_theta(rng)
        return spec, theta, simulate_dataset(spec, theta, n, rng, z=rng.uniform(-1, 1, n))
    if name == "uninl":
        spec = exponential_model()
        theta = random_uninl_theta(rng)
        x = rng.uniform(0, 1, n)
        return spec, theta, simulate_dataset(spec, theta, n, rng, covariates=x[:, None], covariate_names=("x",))
    raise ValueError(name)


BUILTINS = ("eiv", "eiv-hetero", "uninl")


def known_sigma_linear(n_beta, sigma=None):
    """Linear mean with a fixed, known covariance (no variance parameter)."""

    def mean_fn(theta, data):
        return (data.covariates @ theta)[:, None]

    def cov_fn(theta, data):
        s = 1.0 if sigma is None else sigma
        return np.full((data.n, 1, 1), s)

    def first(theta, data):
        a = data.covariates.T[:, :, None].copy()
        return a, np.zeros((n_beta, data.n, 1, 1))

    def second(theta, data):
        return np.zeros((n_beta, n_beta, data.n, 1)), np.zeros((n_beta, n_beta, data.n, 1, 1))

    return ModelSpec(
        name="known-sigma-linear",
        p=n_beta,
        q=1,
        param_names=tuple(f"b{k}" for k in range(n_beta)),
        mean_fn=mean_fn,
        cov_fn=cov_fn,
        first_derivs=first,
        second_derivs=second,
    )


def linear_case(n, n_beta, rng, sigma2=1.0):
    X = np.column_stack([np.ones(n), rng.normal(size=(n, n_beta - 1))])
    beta = rng.normal(size=n_beta)
    y = X @ beta + rng.normal(scale=np.sqrt(sigma2), size=n)
    return linear_model(n_beta), np.append(beta, sigma2), Dataset(y, covariates=X)


def rel_close(x, ref, rtol):
    """Normwise relative agreement ``max|x - ref| <= rtol * max|ref|``."""
    x, ref = np.asarray(x), np.asarray(ref)
    return np.max(np.abs(x - ref)) <= rtol * max(np.max(np.abs(ref)), 1e-300)


_ACCEPTANCE = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line; ``verdict(ok, detail)`` then asserts ``ok``."""

    def record(ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {request.node.name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
