"""Exception types shared across the package.

The CLI maps these onto distinct process exit codes, so raising the right
class matters more than the message wording: configuration and validation
problems are ConfigError, file-format and I/O problems are DataError (with
WeightFormatError for the binary weight container specifically), and
numerical failures during a run are NumericError.
"""

__all__ = [
    "ConfigError",
    "DataError",
    "NotFittedError",
    "NumericError",
    "WeightFormatError",
]


class ConfigError(ValueError):
    """Invalid configuration: bad parameter values, shapes, or combinations."""


class NotFittedError(ConfigError):
    """Estimator method needing fitted state called before fit()."""


class DataError(OSError):
    """Unreadable, unwritable, or malformed input/output data."""


class WeightFormatError(DataError):
    """Malformed binary weight container."""


class NumericError(RuntimeError):
    """A computation produced non-finite or otherwise unusable numbers."""
