"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError (and subclasses) -> 3, NumericError -> 4.
"""


class AvaccelError(Exception):
    """Base class for all package errors."""


class ShapeError(AvaccelError, ValueError):
    """Operand shapes violate an operation's contract."""


class NonFiniteError(AvaccelError, ArithmeticError):
    """A public operation produced or received NaN/Inf values."""


class ConfigError(AvaccelError, ValueError):
    """Invalid or inconsistent configuration."""


class DataError(AvaccelError):
    """Problem with input data or data files."""


class FormatError(DataError):
    """Malformed or corrupt binary file."""

    def __init__(self, message, frame_index=None):
        super().__init__(message)
        self.frame_index = frame_index


class NumericError(AvaccelError, ArithmeticError):
    """Training aborted on a non-finite quantity."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class NotFittedError(AvaccelError, AttributeError):
    """Estimator method called before fit."""
