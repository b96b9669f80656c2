"""Exception types shared across the package."""


class DataError(ValueError):
    """Raised when input data fail structural or value checks."""


class ConfigurationError(ValueError):
    """Raised when a model/basis/CLI configuration is invalid."""


class FitError(RuntimeError):
    """Raised when model fitting cannot proceed (bad start, singular system)."""
