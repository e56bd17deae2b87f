"""Rolling one-step-ahead evaluation, top-n sweeps and method comparison reports.

Protocol: rankings and seasonal fits use the training window only. For
each estimator and number of queries ``n`` the lasso penalty is chosen
once by 3-fold cross-validation on the training rows. Then each test
week ``t`` is estimated by a model refitted on the ``window_size`` weeks
strictly before ``t``. Query frequencies of week ``t`` itself are
available at prediction time (nowcasting), ILI values are not.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _lasso
from .errors import ConvergenceWarning, InsufficientData, InsufficientHistory, InvalidConfig, SpanMismatch, ZeroVariance
from .estimators import (
    AR3,
    AR52,
    LINEAR,
    DesignMatrix,
    EstimatorSpec,
    FeatureSpec,
    LassoConfig,
    feature_matrix,
    feature_names,
    select_lambda_cv,
)
from .ranking import SEASONAL_METHODS, Ranking, RankingMethod, given_order, rank_by_method
from .seasonal import DEFAULT_SEASON_LENGTH
from .timeseries import QueryPanel, WeeklySeries, WeekRange, pearson, rmse

SELECTION_METRICS = ("rmse", "pearson")
BASELINE_GIVEN = "baseline-i"
BASELINE_ALL = "baseline-ii"
BASELINE_HISTORY = "baseline-iii"


@dataclass(frozen=True)
class ExperimentConfig:
    train_range: WeekRange
    test_range: WeekRange
    window_size: int = 104
    ranking_methods: tuple = SEASONAL_METHODS
    estimators: tuple = (LINEAR, AR52, AR3)
    selection_metric: str = "rmse"
    lasso: LassoConfig = field(default_factory=LassoConfig)
    season_length: int = DEFAULT_SEASON_LENGTH
    rank_sign: str = "abs"
    cv_folds: int = 3
    cv_seed: Optional[int] = None
    reselect_lambda: bool = False
    min_window: Optional[int] = None
    jobs: int = 1

    def __post_init__(self):
        if self.train_range.last >= self.test_range.first:
            raise InvalidConfig(f"training {self.train_range} must end before testing {self.test_range} starts")
        if self.window_size < max(2, self.cv_folds):
            raise InvalidConfig(f"window of {self.window_size} weeks is too small to fit an estimator")
        if self.selection_metric not in SELECTION_METRICS:
            raise InvalidConfig(f"selection metric must be one of {SELECTION_METRICS}")
        if self.min_window is not None and not (2 <= self.min_window <= self.window_size):
            raise InvalidConfig("min_window must lie between 2 and window_size")
        if self.jobs < 1:
            raise InvalidConfig("jobs must be >= 1")
        object.__setattr__(self, "ranking_methods", tuple(RankingMethod(m) for m in self.ranking_methods))
        if RankingMethod.GIVEN_ORDER in self.ranking_methods:
            raise InvalidConfig("given-order is evaluated as baselines i and ii, not as a ranking method")

    def to_dict(self) -> dict:
        return {
            "train_range": [self.train_range.first, self.train_range.last],
            "test_range": [self.test_range.first, self.test_range.last],
            "window_size": self.window_size,
            "ranking_methods": [m.value for m in self.ranking_methods],
            "estimators": [{"name": e.name, "ar_lags": e.ar_lags} for e in self.estimators],
            "selection_metric": self.selection_metric,
            "lasso": self.lasso.to_dict(),
            "season_length": self.season_length,
            "rank_sign": self.rank_sign,
            "cv_folds": self.cv_folds,
            "cv_seed": self.cv_seed,
            "reselect_lambda": self.reselect_lambda,
            "min_window": self.min_window,
        }


class _Features:
    """Full feature matrix for one (ranking, estimator); designs for fewer queries are column prefixes."""

    def __init__(self, ili: WeeklySeries, panel: Optional[QueryPanel], ranking: Optional[Ranking], spec: FeatureSpec):
        order = ranking.order if ranking is not None else ()
        self.spec = spec
        self.F, self.y, self.weeks = feature_matrix(ili, panel, order, spec)
        names = [panel.names[i] for i in order[: spec.n_queries]] if spec.n_queries else []
        self.names = feature_names(spec, names)

    def columns(self, n_queries: int) -> int:
        return int(self.spec.include_trend) + self.spec.ar_lags + n_queries

    def matrix(self, n_queries: int) -> np.ndarray:
        return np.ascontiguousarray(self.F[:, : self.columns(n_queries)])

    def design(self, n_queries: int, rows) -> DesignMatrix:
        k = self.columns(n_queries)
        return DesignMatrix(self.F[rows, :k], self.y[rows], self.weeks[rows], self.names[:k])

    def row_of(self, week: int) -> int:
        return int(week - self.weeks[0])


def _metrics(estimates: np.ndarray, observed: np.ndarray):
    err = rmse(estimates, observed)
    try:
        corr = pearson(estimates, observed)
    except ZeroVariance:
        corr = math.nan
    return err, corr


def _rolling(features: _Features, n_queries: int, config: ExperimentConfig, lam: Optional[float] = None):
    """Estimates over the test range plus the penalty used and a convergence flag."""
    test = config.test_range
    if test.first < features.weeks[0] or test.last > features.weeks[-1]:
        raise InsufficientHistory(f"test range {test} is not covered by rows with full lag history")
    first_row = features.row_of(test.first)
    floor = config.window_size if config.min_window is None else config.min_window
    if first_row < floor:
        raise InsufficientHistory(
            f"week {test.first} has {first_row} usable weeks of history, window needs {floor}"
        )
    X = features.matrix(n_queries)
    n_steps = len(test)
    if config.reselect_lambda:
        lams = np.empty(n_steps)
        for s in range(n_steps):
            row = first_row + s
            rows = np.arange(max(0, row - config.window_size), row)
            lams[s] = select_lambda_cv(features.design(n_queries, rows), config.lasso, config.cv_folds, config.cv_seed)
        lam_used = float("nan")
    else:
        if lam is None:
            lam = select_lambda_cv(training_design(features, n_queries, config), config.lasso, config.cv_folds, config.cv_seed)
        lams = np.full(n_steps, float(lam))
        lam_used = float(lam)
    lc = config.lasso
    estimates, converged = _lasso.rolling(
        X, features.y, first_row, lams, config.window_size, floor, lc.standardize, lc.solver_code, lc.tolerance, lc.max_iterations
    )
    return estimates, lam_used, bool(converged.all())


def training_design(features: _Features, n_queries: int, config: ExperimentConfig) -> DesignMatrix:
    train = config.train_range
    rows = np.flatnonzero((features.weeks >= train.first) & (features.weeks <= train.last))
    if rows.size < max(2, config.cv_folds):
        raise InsufficientHistory(f"training range {train} leaves {rows.size} usable rows")
    return features.design(n_queries, rows)


def rolling_estimate(
    ili: WeeklySeries,
    panel: Optional[QueryPanel],
    ranking: Optional[Ranking],
    spec: FeatureSpec,
    config: ExperimentConfig,
    lam: Optional[float] = None,
) -> WeeklySeries:
    """One-step-ahead estimates for every week of ``config.test_range``.

    ``lam=None`` selects the penalty by cross-validation on the training
    range (or per step when ``config.reselect_lambda``).
    """
    if config.test_range not in ili.span:
        raise SpanMismatch(f"test range {config.test_range} outside data span {ili.span}")
    features = _Features(ili, panel, ranking, spec)
    estimates, _, converged = _rolling(features, spec.n_queries, config, lam)
    if not converged:
        warnings.warn("lasso did not converge in some rolling steps", ConvergenceWarning, stacklevel=2)
    return WeeklySeries(config.test_range.first, estimates)


@dataclass(frozen=True, eq=False)
class SweepPoint:
    n: int
    rmse: float
    pearson: float
    lam: float
    estimates: np.ndarray
    converged: bool = True


def _best(points, metric: str):
    if metric == "rmse":
        candidates = [p for p in points if not math.isnan(p.rmse)]
        key = lambda p: (p.rmse, p.n)
    else:
        candidates = [p for p in points if not math.isnan(p.pearson)]
        key = lambda p: (-p.pearson, p.n)
    return min(candidates, key=key) if candidates else None


@dataclass(frozen=True)
class Sweep:
    method: str
    estimator: str
    points: tuple

    @property
    def best_rmse(self) -> Optional[SweepPoint]:
        return _best(self.points, "rmse")

    @property
    def best_pearson(self) -> Optional[SweepPoint]:
        return _best(self.points, "pearson")

    def best(self, metric: str) -> Optional[SweepPoint]:
        return _best(self.points, metric)

    def point(self, n: int) -> SweepPoint:
        for p in self.points:
            if p.n == n:
                return p
        raise KeyError(n)

    @property
    def converged(self) -> bool:
        return all(p.converged for p in self.points)


def sweep_top_n(
    ili: WeeklySeries,
    panel: QueryPanel,
    ranking: Ranking,
    estimator: EstimatorSpec,
    config: ExperimentConfig,
    label: Optional[str] = None,
) -> Sweep:
    """Rolling estimates for n = 1..Q (n = 0..Q with lags) top-ranked queries."""
    if config.test_range not in ili.span:
        raise SpanMismatch(f"test range {config.test_range} outside data span {ili.span}")
    q = panel.n_queries if panel is not None else 0
    if len(ranking) != q:
        raise InvalidConfig(f"ranking covers {len(ranking)} queries, panel has {q}")
    observed = ili.slice(config.test_range.first, config.test_range.last).values
    points = []
    if q >= estimator.min_queries:
        features = _Features(ili, panel, ranking, estimator.with_queries(q))
        for n in range(estimator.min_queries, q + 1):
            estimates, lam, converged = _rolling(features, n, config)
            err, corr = _metrics(estimates, observed)
            estimates.setflags(write=False)
            points.append(SweepPoint(n, err, corr, lam, estimates, converged))
    return Sweep(label or ranking.method.value, estimator.name, tuple(points))


@dataclass(frozen=True)
class Record:
    selection: str
    method: str
    estimator: str
    n: Optional[int]
    rmse: Optional[float]
    pearson: Optional[float]

    def to_dict(self) -> dict:
        clean = lambda v: None if v is None or (isinstance(v, float) and math.isnan(v)) else v
        return {
            "selection": self.selection,
            "method": self.method,
            "estimator": self.estimator,
            "n": self.n,
            "rmse": clean(self.rmse),
            "pearson": clean(self.pearson),
        }


@dataclass(frozen=True)
class MetricsReport:
    records: tuple
    sweeps: tuple
    config: dict
    estimates: dict = field(default_factory=dict)
    converged: bool = True

    def record(self, method: str, estimator: str, selection: str = "rmse") -> Record:
        for r in self.records:
            if (r.method, r.estimator, r.selection) == (method, estimator, selection):
                return r
        raise KeyError((method, estimator, selection))

    def sweep(self, method: str, estimator: str) -> Sweep:
        for s in self.sweeps:
            if (s.method, s.estimator) == (method, estimator):
                return s
        raise KeyError((method, estimator))

    def to_dict(self) -> dict:
        return {"records": [r.to_dict() for r in self.records], "config": self.config}

    def sweep_rows(self) -> list:
        return [(s.method, s.estimator, p.n, p.rmse, p.pearson) for s in self.sweeps for p in s.points]

    def table(self, selection: str = "rmse") -> str:
        """Fixed-width text table: one row per method, value and #q per estimator."""
        estimators = []
        for r in self.records:
            if r.estimator not in estimators:
                estimators.append(r.estimator)
        methods = []
        for r in self.records:
            if r.method not in methods:
                methods.append(r.method)
        title = "RMSE (lower is better)" if selection == "rmse" else "Pearson correlation (higher is better)"
        head = f"{'':<20}" + "".join(f"{e:>12}{'#q':>5}" for e in estimators)
        lines = [title, head, "-" * len(head)]
        for m in methods:
            cells = []
            for e in estimators:
                try:
                    r = self.record(m, e, selection)
                except KeyError:
                    cells.append(f"{'':>12}{'':>5}")
                    continue
                value = r.rmse if selection == "rmse" else r.pearson
                shown = "n/a" if value is None or math.isnan(value) else f"{value:.3f}"
                nq = "" if r.n is None or m == BASELINE_ALL else str(r.n)
                cells.append(f"{shown:>12}{nq:>5}")
            lines.append(f"{m:<20}" + "".join(cells))
        return "\n".join(lines)


def _records_from_sweep(sweep: Sweep) -> list:
    out = []
    for sel in SELECTION_METRICS:
        best = sweep.best(sel)
        if best is None:
            out.append(Record(sel, sweep.method, sweep.estimator, None, None, None))
        else:
            out.append(Record(sel, sweep.method, sweep.estimator, best.n, best.rmse, best.pearson))
    return out


def _run_sweep(args):
    ili, panel, ranking, estimator, config, label = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        return sweep_top_n(ili, panel, ranking, estimator, config, label)


def run_experiment(config: ExperimentConfig, ili: WeeklySeries, panel: QueryPanel) -> MetricsReport:
    """Every ranking method x estimator, both selection metrics, plus baselines i-iii.

    * baseline i: top-n of the given (ingestion) order, n chosen by the sweep;
    * baseline ii: all queries in the given order;
    * baseline iii: lags and trend only (n/a for the linear estimator).
    """
    if config.test_range not in ili.span:
        raise SpanMismatch(f"test range {config.test_range} outside data span {ili.span}")
    rankings = [
        (m.value, rank_by_method(ili, panel, m, config.train_range, config.season_length, config.rank_sign))
        for m in config.ranking_methods
    ]
    rankings.append((BASELINE_GIVEN, given_order(panel)))
    tasks = [(ili, panel, ranking, est, config, label) for label, ranking in rankings for est in config.estimators]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            sweeps = list(pool.map(_run_sweep, tasks))
    else:
        sweeps = [_run_sweep(t) for t in tasks]

    records = []
    for s in sweeps:
        records.extend(_records_from_sweep(s))
    observed = ili.slice(config.test_range.first, config.test_range.last).values
    estimates = {}
    converged = all(s.converged for s in sweeps)
    q = panel.n_queries
    for est in config.estimators:
        if q >= est.min_queries and q > 0:
            features = _Features(ili, panel, given_order(panel), est.with_queries(q))
            values, _, ok = _rolling(features, q, config)
            converged &= ok
            err, corr = _metrics(values, observed)
            estimates[(BASELINE_ALL, est.name)] = values
            records.extend(Record(sel, BASELINE_ALL, est.name, q, err, corr) for sel in SELECTION_METRICS)
        if est.ar_lags > 0:
            features = _Features(ili, None, None, est.with_queries(0))
            values, _, ok = _rolling(features, 0, config)
            converged &= ok
            err, corr = _metrics(values, observed)
            estimates[(BASELINE_HISTORY, est.name)] = values
            records.extend(Record(sel, BASELINE_HISTORY, est.name, None, err, corr) for sel in SELECTION_METRICS)
        else:
            records.extend(Record(sel, BASELINE_HISTORY, est.name, None, None, None) for sel in SELECTION_METRICS)
    for s in sweeps:
        best = s.best(config.selection_metric)
        if best is not None:
            estimates[(s.method, s.estimator)] = best.estimates
    if not converged:
        warnings.warn("lasso did not converge in some fits", ConvergenceWarning, stacklevel=2)
    return MetricsReport(tuple(records), tuple(sweeps), config.to_dict(), estimates, converged)


def check_report_consistency(report: MetricsReport) -> None:
    """Raise AssertionError unless every swept record's optimum is re-derivable from its curve."""
    for s in report.sweeps:
        for sel in SELECTION_METRICS:
            rec = report.record(s.method, s.estimator, sel)
            best = s.best(sel)
            expected = (None, None, None) if best is None else (best.n, best.rmse, best.pearson)
            if (rec.n, rec.rmse, rec.pearson) != expected and not (
                best is not None and rec.n == best.n and rec.rmse == best.rmse and math.isnan(rec.pearson) and math.isnan(best.pearson)
            ):
                raise AssertionError(f"record {rec} disagrees with its sweep optimum {expected}")
