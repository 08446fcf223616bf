"""Built-in models with analytic derivative bundles.

``simple_eiv``
    Structural errors-in-variables line, responses ``(Y_i, X_i)``; parameters
    ``(alpha, beta, mu_x, sigma_x2, sigma2)``.
``hetero_eiv``
    Same with a nonlinear ``exp(gamma z_i)`` mean shift and error variance
    ``sigma2 exp(eta z_i)``; parameters
    ``(alpha, beta, gamma, mu_x, sigma_x2, sigma2, eta)``.
``univariate_nonlinear``
    Scalar response with mean ``mu_i(beta)`` and covariance ``sigma2 I``.
"""
from functools import partial

import numpy as np

from .errors import InvalidConstant, UnsupportedModel
from .model import FD_REL_STEP, FD_REL_STEP_SECOND, ModelSpec

EIV_PARAMS = ("alpha", "beta", "mu_x", "sigma_x2", "sigma2")
HETERO_PARAMS = ("alpha", "beta", "gamma", "mu_x", "sigma_x2", "sigma2", "eta")


def _check_sigma_u2(sigma_u2):
    try:
        value = float(sigma_u2)
    except (TypeError, ValueError):
        raise InvalidConstant(f"sigma_u2 must be a number, got {sigma_u2!r}") from None
    if not np.isfinite(value) or value <= 0:
        raise InvalidConstant(f"sigma_u2 must be positive, got {sigma_u2!r}")
    return value


def _block(n, m):
    return np.broadcast_to(np.asarray(m, dtype=np.float64), (n,) + np.shape(m)).copy()


def _eiv_moment_stats(data, sigma_u2):
    Y, X = data.y[:, 0], data.y[:, 1]
    mx = X.mean()
    vx = X.var()
    sxx = max(vx - sigma_u2, 0.1 * vx)
    beta = np.mean((X - mx) * (Y - Y.mean())) / sxx
    return Y, X, mx, vx, sxx, beta


def simple_eiv(sigma_u2):
    """Structural measurement-error model with known error variance ``sigma_u2``."""
    su2 = _check_sigma_u2(sigma_u2)
    p = 5

    def mean_fn(theta, data):
        alpha, beta, mu_x = theta[:3]
        return _block(data.n, [alpha + beta * mu_x, mu_x])

    def cov_fn(theta, data):
        _, beta, _, sx2, s2 = theta
        return _block(data.n, [[beta**2 * sx2 + s2, beta * sx2], [beta * sx2, sx2 + su2]])

    def first_derivs(theta, data):
        _, beta, mu_x, sx2, _ = theta
        n = data.n
        a = np.zeros((p, n, 2))
        a[0] = [1.0, 0.0]
        a[1] = [mu_x, 0.0]
        a[2] = [beta, 1.0]
        C = np.zeros((p, n, 2, 2))
        C[1] = [[2 * beta * sx2, sx2], [sx2, 0.0]]
        C[3] = [[beta**2, beta], [beta, 1.0]]
        C[4] = [[1.0, 0.0], [0.0, 0.0]]
        return a, C

    def second_derivs(theta, data):
        beta, sx2 = theta[1], theta[3]
        n = data.n
        a2 = np.zeros((p, p, n, 2))
        a2[1, 2] = a2[2, 1] = [1.0, 0.0]
        C2 = np.zeros((p, p, n, 2, 2))
        C2[1, 1] = [[2 * sx2, 0.0], [0.0, 0.0]]
        C2[1, 3] = C2[3, 1] = [[2 * beta, 1.0], [1.0, 0.0]]
        return a2, C2

    def start_fn(data):
        Y, X, mx, _, sxx, beta = _eiv_moment_stats(data, su2)
        vy = Y.var()
        return np.array([Y.mean() - beta * mx, beta, mx, sxx, max(vy - beta**2 * sxx, 0.1 * vy)])

    return ModelSpec(
        name="eiv",
        p=p,
        q=2,
        param_names=EIV_PARAMS,
        mean_fn=mean_fn,
        cov_fn=cov_fn,
        first_derivs=first_derivs,
        second_derivs=second_derivs,
        in_domain=lambda t: t[3] > 0 and t[4] > 0,
        start_fn=start_fn,
        known_constants={"sigma_u2": su2},
    )


def hetero_eiv(sigma_u2, z=None):
    """Heteroscedastic nonlinear measurement-error model.

    ``z`` is the known covariate.  When omitted it is read from the dataset
    covariate named ``"z"`` at evaluation time.
    """
    su2 = _check_sigma_u2(sigma_u2)
    fixed_z = None if z is None else np.asarray(z, dtype=np.float64).reshape(-1)
    p = 7

    def zvec(data):
        zz = fixed_z if fixed_z is not None else data.covariate("z")
        if zz.shape[0] != data.n:
            raise InvalidConstant(f"z has length {zz.shape[0]}, dataset has {data.n} rows")
        return zz

    def mean_fn(theta, data):
        alpha, beta, gamma, mu_x = theta[:4]
        zz = zvec(data)
        mu = np.empty((data.n, 2))
        mu[:, 0] = alpha + beta * mu_x + np.exp(gamma * zz)
        mu[:, 1] = mu_x
        return mu

    def cov_fn(theta, data):
        beta, sx2, s2, eta = theta[1], theta[4], theta[5], theta[6]
        zz = zvec(data)
        S = np.empty((data.n, 2, 2))
        S[:, 0, 0] = beta**2 * sx2 + s2 * np.exp(eta * zz)
        S[:, 0, 1] = S[:, 1, 0] = beta * sx2
        S[:, 1, 1] = sx2 + su2
        return S

    def first_derivs(theta, data):
        beta, gamma, mu_x, sx2, s2, eta = theta[1:]
        zz = zvec(data)
        n = data.n
        eg = np.exp(gamma * zz)
        ee = np.exp(eta * zz)
        a = np.zeros((p, n, 2))
        a[0] = [1.0, 0.0]
        a[1] = [mu_x, 0.0]
        a[2, :, 0] = zz * eg
        a[3] = [beta, 1.0]
        C = np.zeros((p, n, 2, 2))
        C[1] = [[2 * beta * sx2, sx2], [sx2, 0.0]]
        C[4] = [[beta**2, beta], [beta, 1.0]]
        C[5, :, 0, 0] = ee
        C[6, :, 0, 0] = zz * s2 * ee
        return a, C

    def second_derivs(theta, data):
        beta, gamma, sx2, s2, eta = theta[1], theta[2], theta[4], theta[5], theta[6]
        zz = zvec(data)
        n = data.n
        a2 = np.zeros((p, p, n, 2))
        a2[1, 3] = a2[3, 1] = [1.0, 0.0]
        a2[2, 2, :, 0] = zz**2 * np.exp(gamma * zz)
        C2 = np.zeros((p, p, n, 2, 2))
        C2[1, 1] = [[2 * sx2, 0.0], [0.0, 0.0]]
        C2[1, 4] = C2[4, 1] = [[2 * beta, 1.0], [1.0, 0.0]]
        ee = np.exp(eta * zz)
        C2[5, 6, :, 0, 0] = zz * ee
        C2[6, 5, :, 0, 0] = zz * ee
        C2[6, 6, :, 0, 0] = zz**2 * s2 * ee
        return a2, C2

    def start_fn(data):
        Y, X, mx, _, sxx, beta = _eiv_moment_stats(data, su2)
        vy = Y.var()
        # exp(gamma z) = 1 at gamma = 0
        alpha = Y.mean() - beta * mx - 1.0
        return np.array([alpha, beta, 0.0, mx, sxx, max(vy - beta**2 * sxx, 0.1 * vy), 0.0])

    return ModelSpec(
        name="eiv-hetero",
        p=p,
        q=2,
        param_names=HETERO_PARAMS,
        mean_fn=mean_fn,
        cov_fn=cov_fn,
        first_derivs=first_derivs,
        second_derivs=second_derivs,
        in_domain=lambda t: t[4] > 0 and t[5] > 0,
        start_fn=start_fn,
        known_constants={"sigma_u2": su2},
    )


def _beta_steps(beta, rel):
    return np.maximum(rel, rel * np.abs(beta))


def _fd_jacobian(mean_vec, beta, data):
    beta = np.asarray(beta, dtype=np.float64)
    out = np.empty((beta.size, data.n))
    for k, h in enumerate(_beta_steps(beta, FD_REL_STEP)):
        e = np.zeros_like(beta)
        e[k] = h
        out[k] = (mean_vec(beta + e, data) - mean_vec(beta - e, data)) / (2 * h)
    return out


def _fd_jacobian_derivative(jac, beta, data):
    beta = np.asarray(beta, dtype=np.float64)
    out = np.empty((beta.size, beta.size, data.n))
    for k, h in enumerate(_beta_steps(beta, FD_REL_STEP)):
        e = np.zeros_like(beta)
        e[k] = h
        out[k] = (np.asarray(jac(beta + e, data)) - np.asarray(jac(beta - e, data))) / (2 * h)
    return 0.5 * (out + np.swapaxes(out, 0, 1))


def _fd_hessian(mean_vec, beta, data):
    beta = np.asarray(beta, dtype=np.float64)
    m = beta.size
    h = _beta_steps(beta, FD_REL_STEP_SECOND)
    out = np.empty((m, m, data.n))
    f0 = mean_vec(beta, data)
    eye = np.diag(h)
    for r in range(m):
        out[r, r] = (mean_vec(beta + eye[r], data) - 2 * f0 + mean_vec(beta - eye[r], data)) / h[r] ** 2
        for s in range(r):
            d = (
                mean_vec(beta + eye[r] + eye[s], data)
                - mean_vec(beta + eye[r] - eye[s], data)
                - mean_vec(beta - eye[r] + eye[s], data)
                + mean_vec(beta - eye[r] - eye[s], data)
            ) / (4 * h[r] * h[s])
            out[r, s] = out[s, r] = d
    return out


def univariate_nonlinear(mean_fn, n_beta, jac=None, hess=None, start_fn=None, beta_names=None, name="uninl"):
    """Scalar nonlinear regression ``y_i = mu_i(beta) + e_i`` with ``e_i ~ N(0, sigma2)``.

    Parameters
    ----------
    mean_fn : callable
        ``mean_fn(beta, data) -> (n,)``.
    n_beta : int
        Number of regression parameters; the model has ``p = n_beta + 1``.
    jac, hess : callable, optional
        ``jac(beta, data) -> (n_beta, n)`` and ``hess(beta, data) -> (n_beta, n_beta, n)``.
        Missing mean derivatives are obtained by finite differences; the
        covariance derivatives are always exact.
    start_fn : callable, optional
        ``start_fn(data) -> theta``; needed for fitting with automatic start.
    """
    p = n_beta + 1
    names = tuple(beta_names) if beta_names is not None else tuple(f"beta{k + 1}" for k in range(n_beta))

    def mean_vec(beta, data):
        return np.asarray(mean_fn(beta, data), dtype=np.float64).reshape(data.n)

    if jac is None:
        jac = partial(_fd_jacobian, mean_vec)
        if hess is None:
            hess = partial(_fd_hessian, mean_vec)
    elif hess is None:
        hess = partial(_fd_jacobian_derivative, jac)

    def mean(theta, data):
        return mean_vec(theta[:n_beta], data).reshape(data.n, 1)

    def cov(theta, data):
        return np.full((data.n, 1, 1), theta[n_beta])

    # the covariance derivatives are exact whatever the mean: C_sigma2 = I
    def first(theta, data):
        n = data.n
        a = np.zeros((p, n, 1))
        a[:n_beta, :, 0] = jac(theta[:n_beta], data)
        C = np.zeros((p, n, 1, 1))
        C[n_beta] = 1.0
        return a, C

    def second(theta, data):
        n = data.n
        a2 = np.zeros((p, p, n, 1))
        h = np.asarray(hess(theta[:n_beta], data), dtype=np.float64)
        a2[:n_beta, :n_beta, :, 0] = 0.5 * (h + np.swapaxes(h, 0, 1))
        return a2, np.zeros((p, p, n, 1, 1))

    return ModelSpec(
        name=name,
        p=p,
        q=1,
        param_names=names + ("sigma2",),
        mean_fn=mean,
        cov_fn=cov,
        first_derivs=first,
        second_derivs=second,
        in_domain=lambda t: t[n_beta] > 0,
        start_fn=start_fn,
    )


def exponential_model(covariate="x"):
    """``mu_i = b1 exp(b2 x_i)`` with analytic derivatives and a log-linear start."""

    def mean_fn(b, data):
        return b[0] * np.exp(b[1] * data.covariate(covariate))

    def jac(b, data):
        x = data.covariate(covariate)
        e = np.exp(b[1] * x)
        return np.stack([e, b[0] * x * e])

    def hess(b, data):
        x = data.covariate(covariate)
        e = np.exp(b[1] * x)
        h = np.zeros((2, 2, x.size))
        h[0, 1] = h[1, 0] = x * e
        h[1, 1] = b[0] * x**2 * e
        return h

    def start_fn(data):
        y = data.y[:, 0]
        x = data.covariate(covariate)
        if np.all(y > 0):
            slope, intercept = np.polyfit(x, np.log(y), 1)
            b = np.array([np.exp(intercept), slope])
        else:
            b = np.array([y.mean(), 0.0])
        resid = y - b[0] * np.exp(b[1] * x)
        return np.append(b, max(resid.var(), 1e-8 * max(y.var(), 1.0)))

    return univariate_nonlinear(mean_fn, 2, jac=jac, hess=hess, start_fn=start_fn, beta_names=("b1", "b2"))


def linear_model(n_beta):
    """``mu_i = x_i' beta`` using all dataset covariates as the design; OLS start."""

    def mean_fn(b, data):
        return data.covariates @ b

    def jac(b, data):
        return np.asarray(data.covariates).T.copy()

    def hess(b, data):
        return np.zeros((n_beta, n_beta, data.n))

    def start_fn(data):
        X = data.covariates
        y = data.y[:, 0]
        b, *_ = np.linalg.lstsq(X, y, rcond=None)
        return np.append(b, max(np.mean((y - X @ b) ** 2), 1e-12))

    return univariate_nonlinear(mean_fn, n_beta, jac=jac, hess=hess, start_fn=start_fn, name="linear")


BUILTIN_NAMES = ("eiv", "eiv-hetero", "uninl")


def builtin(name, constants=None):
    """Model spec for a built-in name, given its known constants."""
    constants = dict(constants or {})
    if name == "eiv":
        if "sigma_u2" not in constants:
            raise InvalidConstant("model 'eiv' needs the constant sigma_u2")
        return simple_eiv(constants["sigma_u2"])
    if name == "eiv-hetero":
        if "sigma_u2" not in constants:
            raise InvalidConstant("model 'eiv-hetero' needs the constant sigma_u2")
        return hetero_eiv(constants["sigma_u2"])
    if name == "uninl":
        return exponential_model()
    raise UnsupportedModel(f"unknown model {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
