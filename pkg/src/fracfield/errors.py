"""Exception hierarchy.

Three roots mirror the CLI exit codes: configuration problems (exit 2),
input-data problems (exit 3), numeric failures (exit 4).
"""


class FracfieldError(Exception):
    """Base class for all package errors."""


class ConfigError(FracfieldError):
    """Invalid parameters, incompatible grids, or bad configuration."""


class DataError(FracfieldError):
    """Malformed or unusable input data (files, masks, sample sets)."""


class NumericError(FracfieldError):
    """Numeric failure during computation."""


class DegenerateFieldError(NumericError):
    """Field has no usable variance (constant or all-zero input)."""


class UndefinedExponentError(NumericError):
    """Variance ratio too degenerate for a log-ratio exponent estimate."""


class TrainingError(NumericError):
    """Classifier training diverged or produced non-finite loss."""
