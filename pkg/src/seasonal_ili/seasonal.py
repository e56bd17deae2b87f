"""Seasonal baselines of weekly ILI activity and their residuals.

Two models are provided:

* Serfling harmonic regression: intercept, linear trend and one annual
  sine/cosine pair, fitted by least squares.
* Yearly average (YA): the expected value at week ``t`` is the mean of all
  observations sharing the phase ``t mod S``.

The residual ``observed - prediction`` is what the residual rankings
correlate queries against.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InsufficientData, RankDeficient
from .timeseries import WeeklySeries, WeekRange

DEFAULT_SEASON_LENGTH = 52


class ModelKind(str, enum.Enum):
    SERFLING = "serfling"
    YEARLY_AVERAGE = "ya"


@dataclass(frozen=True)
class SerflingFit:
    beta0: float
    beta1: float
    beta2: float
    beta3: float
    season_length: int
    fitted_on: WeekRange

    @property
    def coefficients(self) -> tuple:
        return (self.beta0, self.beta1, self.beta2, self.beta3)

    def to_dict(self) -> dict:
        return {
            "model": ModelKind.SERFLING.value,
            "beta0": self.beta0,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "beta3": self.beta3,
            "season_length": self.season_length,
            "fitted_on": [self.fitted_on.first, self.fitted_on.last],
        }


@dataclass(frozen=True, eq=False)
class YearlyAverageFit:
    phase_means: np.ndarray
    phase_counts: np.ndarray
    season_length: int
    seasons_used: int

    def __post_init__(self):
        means = np.array(self.phase_means, dtype=np.float64)
        counts = np.array(self.phase_counts, dtype=np.int64)
        if means.shape != (self.season_length,) or counts.shape != (self.season_length,):
            raise ValueError("phase arrays must have one entry per week of the season")
        if np.any(counts < 1):
            raise InsufficientData("every phase needs at least one observation")
        means.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "phase_means", means)
        object.__setattr__(self, "phase_counts", counts)

    def to_dict(self) -> dict:
        return {
            "model": ModelKind.YEARLY_AVERAGE.value,
            "season_length": self.season_length,
            "seasons_used": self.seasons_used,
            "phase_means": self.phase_means.tolist(),
            "phase_counts": self.phase_counts.tolist(),
        }


SeasonalFit = Union[SerflingFit, YearlyAverageFit]


@dataclass(frozen=True)
class SeasonalDecomposition:
    model_kind: ModelKind
    prediction: WeeklySeries
    residual: WeeklySeries
    fit: SeasonalFit


def _as_range(weeks) -> WeekRange:
    if isinstance(weeks, WeekRange):
        return weeks
    if isinstance(weeks, WeeklySeries):
        return weeks.span
    first, last = weeks
    return WeekRange(int(first), int(last))


def _harmonics(t: np.ndarray, season_length: int):
    angle = 2.0 * np.pi * t / season_length
    return np.sin(angle), np.cos(angle)


def fit_serfling(series: WeeklySeries, season_length: int = DEFAULT_SEASON_LENGTH) -> SerflingFit:
    """Least-squares fit of ``b0 + b1*t + b2*sin(2pi t/S) + b3*cos(2pi t/S)``.

    ``t`` is the raw week ordinal. The trend column is centered and scaled
    to [-1, 1] before a QR solve; coefficients are mapped back afterwards.
    """
    if season_length < 2:
        raise ValueError(f"season length must be >= 2, got {season_length}")
    n = len(series)
    if n < 4:
        raise RankDeficient(f"need at least 4 weeks to fit 4 coefficients, got {n}")
    t = series.weeks.astype(np.float64)
    mid = 0.5 * (series.start + series.end)
    half = 0.5 * (series.end - series.start)
    sin_t, cos_t = _harmonics(t, season_length)
    design = np.column_stack([np.ones(n), (t - mid) / half, sin_t, cos_t])
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise RankDeficient("Serfling design matrix is singular for this span/season length")
    a = solve_triangular(r, q.T @ series.values)
    slope = a[1] / half
    return SerflingFit(
        beta0=float(a[0] - slope * mid),
        beta1=float(slope),
        beta2=float(a[2]),
        beta3=float(a[3]),
        season_length=int(season_length),
        fitted_on=series.span,
    )


def predict_serfling(fit: SerflingFit, weeks) -> WeeklySeries:
    span = _as_range(weeks)
    t = span.weeks().astype(np.float64)
    sin_t, cos_t = _harmonics(t, fit.season_length)
    values = fit.beta0 + fit.beta1 * t + fit.beta2 * sin_t + fit.beta3 * cos_t
    return WeeklySeries(span.first, values)


def fit_yearly_average(series: WeeklySeries, season_length: int = DEFAULT_SEASON_LENGTH) -> YearlyAverageFit:
    """Per-phase mean of all observations with the same ``week mod S``.

    Partial seasons are allowed: phases simply average however many
    observations they have, so counts may differ by one.
    """
    if season_length < 2:
        raise ValueError(f"season length must be >= 2, got {season_length}")
    phase = series.weeks % season_length
    counts = np.bincount(phase, minlength=season_length)
    if len(series) < season_length or np.any(counts == 0):
        raise InsufficientData(
            f"{len(series)} weeks do not cover all {season_length} phases of a season"
        )
    sums = np.bincount(phase, weights=series.values, minlength=season_length)
    return YearlyAverageFit(
        phase_means=sums / counts,
        phase_counts=counts,
        season_length=int(season_length),
        seasons_used=int(counts.max()),
    )


def predict_yearly_average(fit: YearlyAverageFit, weeks) -> WeeklySeries:
    span = _as_range(weeks)
    return WeeklySeries(span.first, fit.phase_means[span.weeks() % fit.season_length])


def fit_seasonal(series: WeeklySeries, model_kind, season_length: int = DEFAULT_SEASON_LENGTH) -> SeasonalFit:
    kind = ModelKind(model_kind)
    if kind is ModelKind.SERFLING:
        return fit_serfling(series, season_length)
    return fit_yearly_average(series, season_length)


def predict_seasonal(fit: SeasonalFit, weeks) -> WeeklySeries:
    if isinstance(fit, SerflingFit):
        return predict_serfling(fit, weeks)
    return predict_yearly_average(fit, weeks)


def decompose(
    series: WeeklySeries,
    model_kind,
    season_length: int = DEFAULT_SEASON_LENGTH,
    fit: SeasonalFit | None = None,
) -> SeasonalDecomposition:
    """Split ``series`` into seasonal prediction and residual.

    The model is fitted on ``series`` unless a ``fit`` (for instance one
    estimated on a training window) is supplied. The residual is computed
    as ``observed - prediction`` in a single subtraction per week.
    """
    kind = ModelKind(model_kind)
    if fit is None:
        fit = fit_seasonal(series, kind, season_length)
    prediction = predict_seasonal(fit, series.span)
    residual = WeeklySeries(series.start, series.values - prediction.values)
    return SeasonalDecomposition(kind, prediction, residual, fit)
