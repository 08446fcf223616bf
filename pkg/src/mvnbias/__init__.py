"""Bias-corrected maximum likelihood for normal models whose mean and
covariance share parameters."""
from .bias import BiasReport, bias_report, bias_vector, corrected_fit, cox_snell_oracle, phi_vector_product
from .errors import (
    DimensionMismatch,
    DomainError,
    InvalidConstant,
    MVNBiasError,
    NoConvergence,
    NonPositiveDefinite,
    SingularInformation,
    TooManyFailures,
    UnsupportedModel,
)
from .estimator import FitOptions, FitResult, auto_start, fit
from .kernels import BACKEND
from .likelihood import cumulants, fisher_information, log_likelihood, score
from .model import Dataset, DerivativeBundle, ModelSpec, evaluate_derivatives, evaluate_moments, validate_spec
from .models import builtin, exponential_model, hetero_eiv, linear_model, simple_eiv, univariate_nonlinear

__version__ = "0.1.0"


def fuller_data():
    """Corn yield (Y) and soil nitrogen (X) at 11 sites on Marshall soil, Iowa."""
    from importlib.resources import files

    import numpy as np

    text = files(__package__).joinpath("data/fuller.csv").read_text(encoding="utf-8")
    rows = np.array([[float(v) for v in line.split(",")] for line in text.strip().splitlines()[1:]])
    return Dataset(rows[:, 1:3])
