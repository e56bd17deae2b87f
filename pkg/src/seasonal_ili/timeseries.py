"""Weekly series containers and the two evaluation statistics.

Weeks are plain integer ordinals counted from the first week of a dataset;
calendar dates only exist at the file boundary (see :mod:`seasonal_ili.io`).
All containers are immutable: their arrays are flagged read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import LengthMismatch, OutOfRange, SpanMismatch, ZeroVariance

WeekIndex = int


def _frozen(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class WeekRange:
    """Inclusive range of week ordinals ``first..last``."""

    first: int
    last: int

    def __post_init__(self):
        if self.first < 0:
            raise ValueError(f"week ordinals must be >= 0, got {self.first}")
        if self.last < self.first:
            raise ValueError(f"empty week range {self.first}..{self.last}")

    def __len__(self) -> int:
        return self.last - self.first + 1

    def __iter__(self) -> Iterator[int]:
        return iter(range(self.first, self.last + 1))

    def __contains__(self, week) -> bool:
        if isinstance(week, WeekRange):
            return self.first <= week.first and week.last <= self.last
        return self.first <= week <= self.last

    def weeks(self) -> np.ndarray:
        return np.arange(self.first, self.last + 1)

    def __str__(self) -> str:
        return f"{self.first}:{self.last}"

    @classmethod
    def parse(cls, text: str) -> "WeekRange":
        first, sep, last = text.partition(":")
        if not sep:
            raise ValueError(f"expected FIRST:LAST, got {text!r}")
        return cls(int(first), int(last))


@dataclass(frozen=True, eq=False)
class WeeklySeries:
    """A contiguous run of finite weekly values starting at week ``start``."""

    start: int
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, 1)
        if values.size == 0:
            raise ValueError("a weekly series needs at least one value")
        if not np.all(np.isfinite(values)):
            raise ValueError("weekly series values must be finite")
        if self.start < 0:
            raise ValueError(f"week ordinals must be >= 0, got {self.start}")
        object.__setattr__(self, "start", int(self.start))
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeeklySeries):
            return NotImplemented
        return self.start == other.start and np.array_equal(self.values, other.values)

    @property
    def end(self) -> int:
        return self.start + len(self) - 1

    @property
    def span(self) -> WeekRange:
        return WeekRange(self.start, self.end)

    @property
    def weeks(self) -> np.ndarray:
        return np.arange(self.start, self.end + 1)

    def at(self, week: int) -> float:
        if week not in self.span:
            raise OutOfRange(f"week {week} outside {self.span}")
        return float(self.values[week - self.start])

    def slice(self, first: int, last: int) -> "WeeklySeries":
        return slice_series(self, first, last)


@dataclass(frozen=True, eq=False)
class QueryPanel:
    """Weekly frequencies of Q queries: a T x Q matrix aligned to week ``start``."""

    start: int
    names: tuple
    matrix: np.ndarray
    labels: Optional[tuple] = None

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        matrix = np.array(self.matrix, dtype=np.float64, copy=True)
        if matrix.ndim == 1 and matrix.size == 0:
            matrix = matrix.reshape(0, len(names))
        if matrix.ndim != 2:
            raise ValueError(f"panel matrix must be 2-d, got shape {matrix.shape}")
        if matrix.shape[0] < 1:
            raise ValueError("a query panel needs at least one week")
        if matrix.shape[1] != len(names):
            raise LengthMismatch(f"{matrix.shape[1]} columns but {len(names)} names")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("panel entries must be finite")
        labels = self.labels
        if labels is not None:
            labels = tuple(bool(x) for x in labels)
            if len(labels) != len(names):
                raise LengthMismatch(f"{len(labels)} labels for {len(names)} queries")
        if self.start < 0:
            raise ValueError(f"week ordinals must be >= 0, got {self.start}")
        matrix.setflags(write=False)
        object.__setattr__(self, "start", int(self.start))
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "labels", labels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, QueryPanel):
            return NotImplemented
        return (
            self.start == other.start
            and self.names == other.names
            and self.labels == other.labels
            and np.array_equal(self.matrix, other.matrix)
        )

    @property
    def n_weeks(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_queries(self) -> int:
        return self.matrix.shape[1]

    @property
    def end(self) -> int:
        return self.start + self.n_weeks - 1

    @property
    def span(self) -> WeekRange:
        return WeekRange(self.start, self.end)

    def column(self, i: int) -> WeeklySeries:
        return WeeklySeries(self.start, self.matrix[:, i])

    def slice(self, first: int, last: int) -> "QueryPanel":
        if not (self.start <= first <= last <= self.end):
            raise OutOfRange(f"weeks {first}..{last} outside panel span {self.span}")
        rows = self.matrix[first - self.start : last - self.start + 1]
        return QueryPanel(first, self.names, rows, self.labels)

    def select(self, indices: Sequence[int]) -> "QueryPanel":
        """Panel restricted to (and reordered by) the given column indices."""
        idx = [int(i) for i in indices]
        labels = None if self.labels is None else [self.labels[i] for i in idx]
        return QueryPanel(
            self.start, [self.names[i] for i in idx], self.matrix[:, idx].reshape(self.n_weeks, len(idx)), labels
        )

    def with_labels(self, labels) -> "QueryPanel":
        return QueryPanel(self.start, self.names, self.matrix, labels)


def check_same_span(a, b) -> None:
    if a.span != b.span:
        raise SpanMismatch(f"span {a.span} does not match {b.span}")


def _as_pair(a, b, min_len: int):
    x = np.asarray(getattr(a, "values", a), dtype=np.float64)
    y = np.asarray(getattr(b, "values", b), dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < min_len:
        raise LengthMismatch(f"need at least {min_len} values, got {x.size}")
    return x, y


def pearson(a, b) -> float:
    """Sample Pearson correlation of two equal-length sequences.

    Raises ZeroVariance when either input is constant.
    """
    x, y = _as_pair(a, b, 2)
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise ZeroVariance("pearson correlation of a constant sequence")
    dx = x - x.mean()
    dy = y - y.mean()
    r = float(np.dot(dx, dy) / np.sqrt(np.dot(dx, dx) * np.dot(dy, dy)))
    return min(1.0, max(-1.0, r))


def rmse(estimates, observed) -> float:
    x, y = _as_pair(estimates, observed, 1)
    d = x - y
    return float(np.sqrt(np.mean(d * d)))


def normalize_columns(panel: QueryPanel) -> QueryPanel:
    """Standardize every column to sample mean 0 and sample variance 1."""
    m = panel.matrix
    for j in range(panel.n_queries):
        if np.ptp(m[:, j]) == 0.0:
            raise ZeroVariance("cannot standardize a constant column", index=j)
    if panel.n_weeks < 2:
        raise ZeroVariance("cannot standardize a single-week panel", index=0)
    centered = m - m.mean(axis=0)
    scaled = centered / centered.std(axis=0, ddof=1)
    return QueryPanel(panel.start, panel.names, scaled, panel.labels)


def slice_series(series: WeeklySeries, first: int, last: int) -> WeeklySeries:
    """Inclusive sub-series ``first..last``."""
    if not (series.start <= first <= last <= series.end):
        raise OutOfRange(f"weeks {first}..{last} outside series span {series.span}")
    return WeeklySeries(first, series.values[first - series.start : last - series.start + 1])
