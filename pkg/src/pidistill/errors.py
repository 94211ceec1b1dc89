"""Exception taxonomy shared across the package.

ConfigError maps to CLI exit code 2, everything else to 1.
"""


class PidistillError(Exception):
    """Base class for all package errors."""


class ConfigError(PidistillError):
    """Invalid configuration value or combination."""


class DataError(PidistillError):
    """Malformed or inconsistent data handed to an operation."""


class ShapeError(DataError):
    """Dimension mismatch between operands."""


class LoadError(DataError):
    """A dataset or checkpoint file failed validation on load."""


class UndefinedMetricError(PidistillError):
    """Metric has no defined value on this input (e.g. single-class AUC)."""


class TrainingError(PidistillError):
    """Training aborted (non-finite loss or gradient)."""


class GradCheckError(PidistillError):
    """Gradient check hit a non-finite intermediate."""
