"""Exception types shared across the package."""

from __future__ import annotations


class ShapvalError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(ShapvalError):
    """Feature schema is malformed or inconsistent with the data."""


class RowParseError(ShapvalError):
    """A data row failed to parse; carries the zero-based row index."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class UnknownCategoryError(ShapvalError):
    """A categorical value was not seen during preprocessing fit."""


class EnumerationLimitError(ShapvalError):
    """Exact enumeration was requested beyond the supported dimension."""


class CounterfactualSearchError(ShapvalError):
    """Counterfactual search exhausted its budget without a feasible point.

    ``best`` holds the closest candidate found so its score gap can be
    inspected by the caller.
    """

    def __init__(self, message: str, best=None, best_score: float | None = None):
        super().__init__(message)
        self.best = best
        self.best_score = best_score


class EmptyFilterError(ShapvalError):
    """An output filter left no background rows to draw from."""


class TrainingDivergedError(ShapvalError):
    """Amortizer training loss diverged past the abort threshold."""


class StudyStateError(ShapvalError):
    """Study service was driven through an invalid state transition."""


class LogIntegrityError(ShapvalError):
    """Append-only review log failed its hash-chain check."""


class ConvergenceError(ShapvalError):
    """An iterative fit failed to converge within its iteration budget."""
