"""Query-only and autoregressive ILI estimators fitted with the lasso.

Feature layout of a design row for week ``t`` (columns in this order)::

    [trend t]  [y_{t-1} ... y_{t-m}]  [Q_{t,q1} ... Q_{t,qn}]

where ``q1..qn`` are the top-``n`` queries of a ranking. With ``m = 0`` and
no trend this is the linear query model; with ``m > 0`` the trend term is
included and it becomes the autoregressive model.

The lasso objective is ``1/(2T)||y - b0 - Xb||^2 + lam*||b||_1`` with an
unpenalized intercept. With ``standardize=True`` the penalty applies to
coefficients of internally standardized columns (population scaling);
coefficients are always reported on the original scale.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _lasso
from .errors import ArityMismatch, ConvergenceWarning, InsufficientData, InsufficientHistory, InvalidConfig, SpanMismatch
from .ranking import Ranking
from .timeseries import QueryPanel, WeeklySeries, WeekRange

SOLVERS = {"active-set": _lasso.SOLVER_ACTIVE_SET, "cd": _lasso.SOLVER_CD}


@dataclass(frozen=True)
class FeatureSpec:
    n_queries: int
    ar_lags: int = 0
    include_trend: Optional[bool] = None

    def __post_init__(self):
        if self.n_queries < 0 or self.ar_lags < 0:
            raise InvalidConfig("n_queries and ar_lags must be non-negative")
        if self.n_queries + self.ar_lags < 1:
            raise InvalidConfig("a feature spec needs at least one query or one lag")
        trend = self.ar_lags > 0 if self.include_trend is None else bool(self.include_trend)
        if trend and self.ar_lags == 0:
            raise InvalidConfig("the trend term belongs to the autoregressive model (ar_lags > 0)")
        object.__setattr__(self, "include_trend", trend)

    @property
    def n_columns(self) -> int:
        return int(self.include_trend) + self.ar_lags + self.n_queries


@dataclass(frozen=True)
class EstimatorSpec:
    """A family of feature specs that differ only in the number of queries."""

    name: str
    ar_lags: int = 0

    @property
    def min_queries(self) -> int:
        return 0 if self.ar_lags > 0 else 1

    def with_queries(self, n: int) -> FeatureSpec:
        return FeatureSpec(n, self.ar_lags)

    @property
    def label(self) -> str:
        return "Linear" if self.ar_lags == 0 else f"Autoregressive {self.ar_lags}"


LINEAR = EstimatorSpec("linear", 0)
AR52 = EstimatorSpec("ar52", 52)
AR3 = EstimatorSpec("ar3", 3)
ESTIMATORS = {e.name: e for e in (LINEAR, AR52, AR3)}


def estimator_spec(name: str) -> EstimatorSpec:
    if name in ESTIMATORS:
        return ESTIMATORS[name]
    if name.startswith("ar") and name[2:].isdigit() and int(name[2:]) > 0:
        return EstimatorSpec(name, int(name[2:]))
    raise InvalidConfig(f"unknown estimator {name!r} (use linear or arM, e.g. ar52)")


@dataclass(frozen=True)
class LassoConfig:
    """Solver settings.

    ``lambda_grid=None`` means the grid is derived per training set:
    ``n_lambdas`` values log-spaced from the critical lambda down to
    ``lambda_ratio`` times it.
    """

    lambda_grid: Optional[tuple] = None
    n_lambdas: int = 100
    lambda_ratio: float = 1e-4
    max_iterations: int = 10_000
    tolerance: float = 1e-7
    standardize: bool = True
    solver: str = "active-set"

    def __post_init__(self):
        if self.lambda_grid is not None:
            grid = tuple(float(v) for v in self.lambda_grid)
            if not grid:
                raise InvalidConfig("lambda grid must not be empty")
            if any(v <= 0 or not np.isfinite(v) for v in grid):
                raise InvalidConfig("lambda grid values must be positive and finite")
            if any(b >= a for a, b in zip(grid, grid[1:])):
                raise InvalidConfig("lambda grid must be strictly descending")
            object.__setattr__(self, "lambda_grid", grid)
        if self.tolerance <= 0:
            raise InvalidConfig("tolerance must be positive")
        if self.max_iterations < 1:
            raise InvalidConfig("max_iterations must be >= 1")
        if self.n_lambdas < 1 or not (0 < self.lambda_ratio < 1):
            raise InvalidConfig("need n_lambdas >= 1 and 0 < lambda_ratio < 1")
        if self.solver not in SOLVERS:
            raise InvalidConfig(f"solver must be one of {sorted(SOLVERS)}")

    @property
    def solver_code(self) -> int:
        return SOLVERS[self.solver]

    def to_dict(self) -> dict:
        return {
            "lambda_grid": None if self.lambda_grid is None else list(self.lambda_grid),
            "n_lambdas": self.n_lambdas,
            "lambda_ratio": self.lambda_ratio,
            "max_iterations": self.max_iterations,
            "tolerance": self.tolerance,
            "standardize": self.standardize,
            "solver": self.solver,
        }


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray
    weeks: np.ndarray
    column_names: tuple
    spec: Optional[FeatureSpec] = None

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ArityMismatch(f"design {X.shape} does not match target {y.shape}")
        if len(self.column_names) != X.shape[1]:
            raise ArityMismatch("one column name per design column is required")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("design entries must be finite")
        for a in (X, y):
            a.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "weeks", np.asarray(self.weeks, dtype=np.int64))
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_columns(self) -> int:
        return self.X.shape[1]

    def rows(self, index) -> "DesignMatrix":
        return DesignMatrix(self.X[index], self.y[index], self.weeks[index], self.column_names, self.spec)


@dataclass(frozen=True, eq=False)
class FittedModel:
    intercept: float
    coefficients: np.ndarray
    lam: float
    spec: Optional[FeatureSpec] = None
    column_names: tuple = ()
    converged: bool = True
    n_iter: int = 0

    @property
    def nonzero(self) -> list:
        return [name for name, c in zip(self.column_names, self.coefficients) if c != 0.0]

    def to_dict(self) -> dict:
        spec = None
        if self.spec is not None:
            spec = {
                "n_queries": self.spec.n_queries,
                "ar_lags": self.spec.ar_lags,
                "include_trend": self.spec.include_trend,
            }
        return {
            "intercept": self.intercept,
            "coefficients": {n: float(c) for n, c in zip(self.column_names, self.coefficients)},
            "lambda": self.lam,
            "spec": spec,
            "converged": self.converged,
            "n_iter": self.n_iter,
        }


def feature_names(spec: FeatureSpec, query_names: Sequence[str]) -> list:
    names = ["trend"] if spec.include_trend else []
    names += [f"lag_{j}" for j in range(1, spec.ar_lags + 1)]
    return names + list(query_names)


def feature_matrix(ili: WeeklySeries, panel: Optional[QueryPanel], order: Sequence[int], spec: FeatureSpec):
    """Features for every week whose ``ar_lags`` predecessors exist.

    Returns ``(F, y, weeks)``; row ``r`` describes week ``weeks[r]``.
    """
    m = spec.ar_lags
    if len(ili) <= m:
        raise InsufficientHistory(f"{len(ili)} weeks cannot supply {m} lags")
    if spec.n_queries > 0:
        if panel is None:
            raise ValueError("query features need a panel")
        if panel.span != ili.span:
            raise SpanMismatch(f"panel span {panel.span} differs from ILI span {ili.span}")
        if spec.n_queries > len(order):
            raise InvalidConfig(f"ranking has {len(order)} queries, {spec.n_queries} requested")
    values = ili.values
    rows = np.arange(m, len(ili))
    cols = []
    if spec.include_trend:
        cols.append((ili.start + rows).astype(np.float64))
    for j in range(1, m + 1):
        cols.append(values[rows - j])
    if spec.n_queries:
        top = np.asarray(order[: spec.n_queries], dtype=np.int64)
        cols.append(panel.matrix[m:, top])
    F = np.column_stack(cols) if cols else np.empty((rows.size, 0))
    return np.ascontiguousarray(F), values[m:].copy(), ili.start + rows


def build_design(
    ili: WeeklySeries,
    panel: Optional[QueryPanel],
    ranking: Optional[Ranking],
    spec: FeatureSpec,
    window: WeekRange,
) -> DesignMatrix:
    """Design rows for the weeks of ``window`` that have full lag history.

    Weeks whose lags reach before the start of ``ili`` are dropped; an
    empty result raises InsufficientHistory.
    """
    if window not in ili.span:
        raise SpanMismatch(f"window {window} outside data span {ili.span}")
    order = ranking.order if ranking is not None else ()
    F, y, weeks = feature_matrix(ili, panel, order, spec)
    keep = (weeks >= window.first) & (weeks <= window.last)
    if not keep.any():
        raise InsufficientHistory(f"no week in {window} has {spec.ar_lags} weeks of lag history")
    query_names = [panel.names[i] for i in order[: spec.n_queries]] if spec.n_queries else []
    return DesignMatrix(F[keep], y[keep], weeks[keep], feature_names(spec, query_names), spec)


def _as_design(X) -> DesignMatrix:
    if isinstance(X, DesignMatrix):
        return X
    x, y = X
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return DesignMatrix(x, y, np.arange(x.shape[0]), [f"x{j}" for j in range(x.shape[1])])


def _warn_unconverged(what: str, count: int = 1) -> None:
    warnings.warn(f"lasso did not converge ({what}, {count} fit(s))", ConvergenceWarning, stacklevel=3)


def critical_lambda(X, config: LassoConfig = LassoConfig()) -> float:
    """Smallest lambda at which every coefficient is zero."""
    d = _as_design(X)
    XsT, _, _, usable = _lasso.standardize(d.X, config.standardize)
    return float(_lasso.critical_lambda(XsT, d.y - d.y.mean(), usable))


def lambda_grid(X, config: LassoConfig = LassoConfig()) -> np.ndarray:
    if config.lambda_grid is not None:
        return np.array(config.lambda_grid)
    top = critical_lambda(X, config)
    if top <= 0.0:
        return np.array([1.0])
    return top * np.logspace(0.0, np.log10(config.lambda_ratio), config.n_lambdas)


def fit_lasso(X, lam: float, config: LassoConfig = LassoConfig(), init: Optional[FittedModel] = None) -> FittedModel:
    """Fit the lasso at a fixed ``lam``.

    ``X`` is a DesignMatrix or an ``(X, y)`` pair. ``init`` warm-starts the
    solver from a previous model's coefficients. Non-convergence is
    reported through ``FittedModel.converged`` and a ConvergenceWarning.
    """
    d = _as_design(X)
    if d.n_rows < 2:
        raise InsufficientData("the lasso needs at least 2 rows")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    start = np.zeros(d.n_columns)
    if init is not None:
        if init.coefficients.shape != (d.n_columns,):
            raise ArityMismatch("warm start has the wrong number of coefficients")
        _, _, sd, usable = _lasso.standardize(d.X, config.standardize)
        start = np.where(usable, init.coefficients * sd, 0.0)
    _, coef, _, n_iter, converged = _lasso.fit(
        d.X, d.y, float(lam), start, config.standardize, config.solver_code, config.tolerance, config.max_iterations
    )
    # unpenalized intercept; the null model gets exactly mean(y)
    intercept = d.y.mean() - d.X.mean(axis=0) @ coef
    if not converged:
        _warn_unconverged(f"lambda={lam:g}")
    coef.setflags(write=False)
    return FittedModel(float(intercept), coef, float(lam), d.spec, d.column_names, bool(converged), int(n_iter))


def lasso_objective(X, model: FittedModel, config: LassoConfig = LassoConfig()) -> float:
    """Objective value of ``model`` on ``X`` in the solver's own parameterization."""
    d = _as_design(X)
    XsT, mu, sd, usable = _lasso.standardize(d.X, config.standardize)
    beta = np.where(usable, model.coefficients * sd, 0.0)
    return float(_lasso.objective(XsT, d.y - d.y.mean(), beta, model.lam))


def lasso_path(X, grid, config: LassoConfig = LassoConfig()):
    """Warm-started fits over a descending grid: ``(intercepts, coefs, converged)``."""
    d = _as_design(X)
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    return _lasso.path(d.X, d.y, grid, config.standardize, config.solver_code, config.tolerance, config.max_iterations)


def cv_folds(n_rows: int, folds: int = 3, shuffle_seed: Optional[int] = None) -> list:
    """Row indices of each held-out fold: contiguous blocks unless a seed asks for random folds."""
    if n_rows < folds:
        raise InsufficientData(f"{n_rows} rows cannot form {folds} folds")
    rows = np.arange(n_rows)
    if shuffle_seed is not None:
        rows = np.random.default_rng(shuffle_seed).permutation(n_rows)
        return [np.sort(part) for part in np.array_split(rows, folds)]
    return np.array_split(rows, folds)


def cv_curve(X, config: LassoConfig = LassoConfig(), folds: int = 3, shuffle_seed: Optional[int] = None):
    """Mean held-out RMSE for each grid lambda: ``(grid, mean_rmse)``."""
    d = _as_design(X)
    grid = lambda_grid(d, config)
    per_fold = []
    unconverged = 0
    for held in cv_folds(d.n_rows, folds, shuffle_seed):
        train = np.setdiff1d(np.arange(d.n_rows), held)
        intercepts, coefs, converged = _lasso.path(
            np.ascontiguousarray(d.X[train]),
            np.ascontiguousarray(d.y[train]),
            grid,
            config.standardize,
            config.solver_code,
            config.tolerance,
            config.max_iterations,
        )
        unconverged += int((~converged).sum())
        pred = intercepts[:, None] + coefs @ d.X[held].T
        per_fold.append(np.sqrt(np.mean((pred - d.y[held]) ** 2, axis=1)))
    if unconverged:
        _warn_unconverged("cross-validation path", unconverged)
    return grid, np.mean(per_fold, axis=0)


def select_lambda_cv(X, config: LassoConfig = LassoConfig(), folds: int = 3, shuffle_seed: Optional[int] = None) -> float:
    """Grid lambda with the lowest mean held-out RMSE; ties go to the larger lambda."""
    grid, score = cv_curve(X, config, folds, shuffle_seed)
    best = score.min()
    tied = np.flatnonzero(score <= best * (1.0 + 1e-12))
    return float(grid[tied[0]])


def predict(model: FittedModel, features):
    """``intercept + features . coefficients`` for one row or a matrix of rows."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 0 or x.ndim > 2 or x.shape[-1] != model.coefficients.shape[0]:
        raise ArityMismatch(f"expected {model.coefficients.shape[0]} features, got shape {x.shape}")
    out = model.intercept + x @ model.coefficients
    return float(out) if x.ndim == 1 else out
