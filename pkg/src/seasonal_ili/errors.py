"""Exception hierarchy.

Errors fall into two families so the CLI can map them to exit codes:
``DataError`` (bad or inconsistent input, exit 2) and ``NumericalError``
(degenerate numerics, exit 3).
"""

from __future__ import annotations


class SeasonalIliError(Exception):
    """Base class for every error raised by this package."""


class DataError(SeasonalIliError, ValueError):
    """Input data is malformed, misaligned or too short."""


class NumericalError(SeasonalIliError, ValueError):
    """A computation hit a degenerate case (constant signal, singular design)."""


class LengthMismatch(DataError):
    pass


class OutOfRange(DataError, IndexError):
    pass


class SpanMismatch(DataError):
    pass


class InsufficientData(DataError):
    pass


class InsufficientHistory(DataError):
    pass


class MissingLabels(DataError):
    pass


class ArityMismatch(DataError):
    pass


class InvalidConfig(DataError):
    pass


class ParseError(DataError):
    """CSV content could not be parsed; carries the 1-based line and column."""

    def __init__(self, message: str, path=None, line: int | None = None, column: int | None = None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class DateGap(DataError):
    def __init__(self, message: str, date=None):
        self.date = date
        super().__init__(message)


class LabelMismatch(DataError):
    pass


class ZeroVariance(NumericalError):
    """A series (or panel column) is constant where variation is required."""

    def __init__(self, message: str = "zero variance", index: int | None = None):
        self.index = index
        super().__init__(message if index is None else f"{message} (column {index})")


class DegenerateTarget(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class ConvergenceWarning(UserWarning):
    """The lasso solver stopped at its iteration cap; the result is still returned."""
