"""
Exception hierarchy for the immune engine.

Every error is a ValueError so callers that already guard input with
``except ValueError`` keep working. ``exit_code`` is what the CLI returns.
"""
from typing import Optional


class AISError(ValueError):
    """Base class for all engine errors."""

    exit_code = 1


class MalformedEncodingError(AISError):
    """Text could not be decoded into a pattern."""

    def __init__(self, message: str, position: Optional[int] = None):
        super().__init__(message)
        self.position = position


class DimensionError(AISError):
    """Two patterns of different length were compared."""


class ParameterError(AISError):
    """A numeric parameter is outside its documented range."""


class InvalidRecordError(AISError):
    """An observed record is not usable (e.g. it contains wildcards)."""


class RepresentationError(AISError, TypeError):
    """Patterns of different representations were mixed."""


class LifecycleError(AISError):
    """A detector is in the wrong lifecycle state for the operation."""


class CoverageExhaustedError(AISError):
    """Self covers the candidate space: no detector survived censoring."""

    exit_code = 3


class NoDataError(AISError):
    """No antibody holds the data needed for a prediction."""


class InputError(AISError):
    """Caller supplied inputs that violate an operation's preconditions."""


class ConfigError(AISError):
    """Configuration file or flag values failed validation."""


class DataFileError(InputError):
    """A data file is missing or malformed. ``row`` is the 1-based file line."""

    def __init__(self, message: str, row: Optional[int] = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class DuplicateRowError(DataFileError):
    """A (user_id, item_id) pair appears twice."""


class ScoreRangeError(DataFileError):
    """A rating lies outside [0, 5]."""


class WildcardInRecordError(DataFileError, InvalidRecordError):
    """Observed traffic contains a wildcard field."""


class UnknownLabelError(DataFileError):
    """A ground-truth label is neither ``self`` nor ``nonself``."""
