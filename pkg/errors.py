from typing import Optional


class OddityLabError(Exception):
    """Base class for every error raised deliberately by this project."""


class RangeError(OddityLabError, ValueError):
    """A scalar argument fell outside its documented range."""

    def __init__(self, name: str, value, low, high):
        self.name = name
        self.value = value
        self.low = low
        self.high = high
        super().__init__(f"{name}={value!r} outside [{low}, {high}]")


class DimensionError(OddityLabError, ValueError):
    """
    Raised when a tensor or frame has the wrong shape.

    Args:
        axis: Name or index of the offending axis.
        expected: Expected size (or description).
        actual: Size that was received.
        context: Optional name of the operation that detected the mismatch.
    """

    def __init__(self, axis, expected, actual, context: Optional[str] = None):
        self.axis = axis
        self.expected = expected
        self.actual = actual
        self.context = context
        where = f"{context}: " if context else ""
        super().__init__(f"{where}axis {axis} expected {expected}, got {actual}")


class ConfigurationError(OddityLabError, ValueError):
    """Invalid or conflicting configuration, detected before any work starts."""


class GenerationError(OddityLabError, RuntimeError):
    """A task generator exhausted its retry budget."""

    def __init__(self, task_id: int, attempts: int, reason: str = ""):
        self.task_id = task_id
        self.attempts = attempts
        detail = f": {reason}" if reason else ""
        super().__init__(f"task {task_id}: no valid layout after {attempts} attempts{detail}")


class DatasetError(OddityLabError):
    """Base class for dataset container problems."""


class DatasetFormatError(DatasetError):
    """Magic bytes or header fields are not a dataset container."""


class DatasetVersionError(DatasetError):
    """Container version is not supported by this build."""


class DatasetTruncatedError(DatasetError):
    """File ends before the declared content."""


class DatasetChecksumError(DatasetError):
    """Trailing CRC32 does not match the content."""


class DatasetIntegrityError(DatasetError):
    """Header and records disagree, or a record carries an impossible value."""


class CheckpointError(OddityLabError):
    """Checkpoint file is malformed or does not match the model."""


class NumericError(OddityLabError, FloatingPointError):
    """A forward or backward value became NaN or infinite."""


class GeometryError(OddityLabError, ValueError):
    """A shape or transform is degenerate (e.g. a singular matrix)."""


class ShutdownRequested(OddityLabError):
    """A shutdown signal arrived before a long-running job could finish."""
