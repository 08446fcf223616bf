"""Exception hierarchy."""


class MVNBiasError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(MVNBiasError, ValueError):
    """Parameter vector outside the model's open domain, or an undefined evaluation."""


class NonPositiveDefinite(MVNBiasError, ValueError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"covariance block {index} is not positive definite")


class SingularInformation(MVNBiasError, ArithmeticError):
    """Expected information is singular or too ill-conditioned to invert."""


class NoConvergence(MVNBiasError, RuntimeError):
    def __init__(self, message, trace=()):
        self.trace = list(trace)
        super().__init__(message)


class UnsupportedModel(MVNBiasError, TypeError):
    """Automatic starting values are only available for built-in models."""


class InvalidConstant(MVNBiasError, ValueError):
    """A known model constant is missing or out of range."""


class DimensionMismatch(MVNBiasError, ValueError):
    pass


class TooManyFailures(MVNBiasError, RuntimeError):
    def __init__(self, n, failed, replications):
        self.n = n
        self.failed = failed
        self.replications = replications
        super().__init__(
            f"{failed} of {replications} replications failed at n={n} (ceiling is 10%)"
        )
