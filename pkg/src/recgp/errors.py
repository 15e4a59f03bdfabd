"""Exception hierarchy shared by all modules."""


class RecGPError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(RecGPError, ValueError):
    """An argument is outside its valid range."""


class DomainError(RecGPError, ValueError):
    """A physical quantity is outside the model's domain (e.g. zero distance)."""


class DataError(RecGPError, ValueError):
    """Input data is malformed (non-finite entries, wrong shape)."""


class NumericError(RecGPError, ArithmeticError):
    """A numerical routine failed, typically a Cholesky factorization."""

    def __init__(self, message, params=None):
        super().__init__(message)
        self.params = params


class TrainingError(NumericError):
    """Every optimization restart failed."""


class ConfigError(RecGPError, ValueError):
    """Experiment configuration failed validation."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
