"""Seasonal re-ranking of candidate queries and relevance curves.

A ranking orders panel columns by the strength of their Pearson
correlation with a target signal computed on the training window: the
seasonal model's prediction (``seasonal-*`` methods) or the residual
between observed ILI and that prediction (``residual-*`` methods).
``given-order`` keeps the order in which the queries were ingested, which
for exports from a correlation search service is the order of correlation with raw ILI.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from .errors import DegenerateTarget, MissingLabels, ZeroVariance
from .seasonal import DEFAULT_SEASON_LENGTH, ModelKind, decompose
from .timeseries import QueryPanel, WeeklySeries, WeekRange, check_same_span, pearson


class RankingMethod(str, enum.Enum):
    SEASONAL_SERFLING = "seasonal-serfling"
    SEASONAL_YA = "seasonal-ya"
    RESIDUAL_SERFLING = "residual-serfling"
    RESIDUAL_YA = "residual-ya"
    GIVEN_ORDER = "given-order"

    @property
    def model_kind(self) -> Optional[ModelKind]:
        if self in (RankingMethod.SEASONAL_SERFLING, RankingMethod.RESIDUAL_SERFLING):
            return ModelKind.SERFLING
        if self in (RankingMethod.SEASONAL_YA, RankingMethod.RESIDUAL_YA):
            return ModelKind.YEARLY_AVERAGE
        return None

    @property
    def uses_residual(self) -> bool:
        return self in (RankingMethod.RESIDUAL_SERFLING, RankingMethod.RESIDUAL_YA)


SEASONAL_METHODS = (
    RankingMethod.SEASONAL_SERFLING,
    RankingMethod.SEASONAL_YA,
    RankingMethod.RESIDUAL_SERFLING,
    RankingMethod.RESIDUAL_YA,
)

RANK_SIGNS = ("abs", "signed")


@dataclass(frozen=True)
class Ranking:
    """Query indices best-first; ``scores[k]`` is the correlation of ``order[k]``."""

    method: RankingMethod
    order: tuple
    scores: Optional[tuple] = None
    target_span: Optional[WeekRange] = None
    sign: str = "abs"

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if sorted(order) != list(range(len(order))):
            raise ValueError("ranking order must be a permutation of 0..Q-1")
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "method", RankingMethod(self.method))
        if self.scores is not None:
            scores = tuple(float(s) for s in self.scores)
            if len(scores) != len(order) or not all(np.isfinite(scores)):
                raise ValueError("ranking scores must be finite, one per query")
            object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return len(self.order)

    def top(self, n: int) -> tuple:
        return self.order[:n]

    def to_dict(self, names=None) -> dict:
        out = {
            "method": self.method.value,
            "sign": self.sign,
            "order": list(self.order),
            "scores": None if self.scores is None else list(self.scores),
        }
        if self.target_span is not None:
            out["target_span"] = [self.target_span.first, self.target_span.last]
        if names is not None:
            out["queries"] = [names[i] for i in self.order]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Ranking":
        span = data.get("target_span")
        return cls(
            method=RankingMethod(data["method"]),
            order=data["order"],
            scores=data.get("scores"),
            target_span=None if span is None else WeekRange(*span),
            sign=data.get("sign", "abs"),
        )


@dataclass(frozen=True)
class RelevanceCurve:
    """``counts[k]`` is the number of relevant queries among the top ``k+1``."""

    counts: tuple
    total_relevant: int

    def fractions(self) -> list:
        return [c / (k + 1) for k, c in enumerate(self.counts)]

    def rows(self) -> list:
        return [(k + 1, c, c / (k + 1)) for k, c in enumerate(self.counts)]


def given_order(panel: QueryPanel) -> Ranking:
    return Ranking(RankingMethod.GIVEN_ORDER, range(panel.n_queries), None, None)


def rank_queries(
    panel: QueryPanel,
    target: WeeklySeries,
    method: RankingMethod,
    sign: str = "abs",
) -> Ranking:
    """Order panel columns by correlation with ``target``.

    With ``sign="abs"`` the key is ``|r|`` descending; with ``"signed"`` it
    is ``r`` descending. Ties keep panel order. Constant columns get score
    0 and are placed last.
    """
    method = RankingMethod(method)
    if method is RankingMethod.GIVEN_ORDER:
        raise ValueError("given-order rankings are constructed with given_order(), not computed")
    if sign not in RANK_SIGNS:
        raise ValueError(f"sign must be one of {RANK_SIGNS}, got {sign!r}")
    check_same_span(panel, target)
    if np.ptp(target.values) == 0.0:
        raise DegenerateTarget("ranking target is constant over the ranking span")

    scores = np.zeros(panel.n_queries)
    constant = np.zeros(panel.n_queries, dtype=bool)
    for i in range(panel.n_queries):
        try:
            scores[i] = pearson(panel.matrix[:, i], target.values)
        except ZeroVariance:
            constant[i] = True
    key = np.abs(scores) if sign == "abs" else scores
    order = sorted(range(panel.n_queries), key=lambda i: (constant[i], -key[i], i))
    return Ranking(method, order, [scores[i] for i in order], target.span, sign)


def ranking_target(
    ili: WeeklySeries, method: RankingMethod, season_length: int = DEFAULT_SEASON_LENGTH
) -> WeeklySeries:
    """Seasonal prediction or residual of ``ili`` for a seasonal ranking method."""
    method = RankingMethod(method)
    if method.model_kind is None:
        raise ValueError(f"{method.value} has no seasonal target")
    parts = decompose(ili, method.model_kind, season_length)
    return parts.residual if method.uses_residual else parts.prediction


def rank_by_method(
    ili: WeeklySeries,
    panel: QueryPanel,
    method: RankingMethod,
    train_range: WeekRange | None = None,
    season_length: int = DEFAULT_SEASON_LENGTH,
    sign: str = "abs",
) -> Ranking:
    """Fit the method's seasonal model on the training window and rank on it.

    Data outside ``train_range`` never influences the ranking.
    """
    method = RankingMethod(method)
    if method is RankingMethod.GIVEN_ORDER:
        return given_order(panel)
    check_same_span(ili, panel)
    span = train_range or ili.span
    ili_train = ili.slice(span.first, span.last)
    panel_train = panel.slice(span.first, span.last)
    return rank_queries(panel_train, ranking_target(ili_train, method, season_length), method, sign)


def relevance_curve(ranking: Ranking, panel: QueryPanel) -> RelevanceCurve:
    if panel.labels is None:
        raise MissingLabels("relevance curves need per-query relevance labels")
    if len(ranking) != panel.n_queries:
        raise ValueError(f"ranking covers {len(ranking)} queries, panel has {panel.n_queries}")
    flags = np.array([panel.labels[i] for i in ranking.order], dtype=np.int64)
    counts = np.cumsum(flags)
    return RelevanceCurve(tuple(int(c) for c in counts), int(flags.sum()))


def fixture_queries() -> list:
    """The 100 fixture queries in their original order, with relevance flags."""
    with resources.files("seasonal_ili.data").joinpath("query_fixture.csv").open(newline="") as fh:
        reader = csv.DictReader(fh)
        return [(row["query"], row["relevant"] == "1") for row in reader]
