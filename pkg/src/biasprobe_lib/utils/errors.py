from typing import Optional


class BiasProbeError(Exception):
    """Base class for every error raised by biasprobe."""

    exit_code: int = 4


class ConfigurationError(BiasProbeError, ValueError):
    """Raised when a parameter, mechanism or config file is invalid."""

    exit_code = 2

    def __init__(
        self, message: str, key: Optional[str] = None, line: Optional[int] = None
    ):
        self.key = key
        self.line = line
        location = []
        if line is not None:
            location.append(f"line {line}")
        if key:
            location.append(f"key '{key}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)


class CapacityError(ConfigurationError):
    """Raised when a covariate dimension is too large to enumerate."""


class SchemaError(BiasProbeError):
    """Raised when an ingested cohort file violates the cohort schema."""

    exit_code = 3


class SingularityError(BiasProbeError, ZeroDivisionError):
    """Raised when a closed-form expression has a zero denominator."""


class EstimationError(BiasProbeError):
    """Raised when an estimator has nothing to fit or score."""


class UndefinedCorrelationError(EstimationError):
    """Raised when a correlation input is constant."""


class RunFailedError(BiasProbeError):
    """Wraps a failure inside a seeded run so the seed travels with it."""

    def __init__(self, seed: int, cause: Exception):
        self.seed = seed
        self.cause = cause
        super().__init__(f"Run with seed {seed} failed: {cause}")
