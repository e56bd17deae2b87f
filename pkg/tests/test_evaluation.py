import math

import numpy as np
import pytest

from seasonal_ili.errors import InsufficientHistory, InvalidConfig, SpanMismatch
from seasonal_ili.estimators import AR3, AR52, LINEAR, EstimatorSpec, FeatureSpec, build_design, fit_lasso, predict
from seasonal_ili.evaluation import (
    BASELINE_ALL,
    BASELINE_GIVEN,
    BASELINE_HISTORY,
    ExperimentConfig,
    MetricsReport,
    Record,
    Sweep,
    SweepPoint,
    check_report_consistency,
    rolling_estimate,
    run_experiment,
    sweep_top_n,
)
from seasonal_ili.ranking import RankingMethod, given_order, rank_by_method
from seasonal_ili.timeseries import QueryPanel, WeeklySeries, WeekRange, rmse


def config_for(weeks, train_end, window=20, **kw):
    return ExperimentConfig(WeekRange(0, train_end), WeekRange(train_end + 1, weeks - 1), window, **kw)


def test_config_validation():
    with pytest.raises(InvalidConfig):
        ExperimentConfig(WeekRange(0, 10), WeekRange(10, 20))
    with pytest.raises(InvalidConfig):
        ExperimentConfig(WeekRange(0, 10), WeekRange(11, 20), selection_metric="mae")
    with pytest.raises(InvalidConfig):
        ExperimentConfig(WeekRange(0, 10), WeekRange(11, 20), ranking_methods=(RankingMethod.GIVEN_ORDER,))


def test_ar1_on_linear_series_is_exact():
    y = WeeklySeries(0, np.arange(80.0))
    config = config_for(80, 49)
    est = rolling_estimate(y, None, None, FeatureSpec(0, 1), config, lam=0.0)
    np.testing.assert_allclose(est.values, np.arange(50.0, 80.0), atol=1e-6)
    assert est.span == config.test_range


def test_perfect_query_copy_is_exact(rng):
    y = rng.normal(size=90) + 5
    panel = QueryPanel(0, ["copy"], y[:, None].copy())
    config = config_for(90, 59)
    est = rolling_estimate(WeeklySeries(0, y), panel, given_order(panel), FeatureSpec(1, 0), config, lam=0.0)
    np.testing.assert_allclose(est.values, y[60:], atol=1e-6)


def test_insufficient_history(rng):
    y = WeeklySeries(0, rng.normal(size=60))
    config = config_for(60, 9, window=20)
    with pytest.raises(InsufficientHistory):
        rolling_estimate(y, None, None, FeatureSpec(0, 3), config)
    short = config_for(60, 9, window=20, min_window=5)
    est = rolling_estimate(y, None, None, FeatureSpec(0, 3), short)
    assert len(est) == 50
    with pytest.raises(SpanMismatch):
        rolling_estimate(y, None, None, FeatureSpec(0, 3), config_for(70, 40))


def naive_rolling(ili, panel, ranking, spec, config, lam):
    """Oracle: an independent step-by-step loop over build_design + fit_lasso."""
    out = []
    model = None
    for t in config.test_range:
        window = WeekRange(t - config.window_size, t - 1)
        design = build_design(ili, panel, ranking, spec, window)
        model = fit_lasso(design, lam, config.lasso, init=model)
        row = build_design(ili, panel, ranking, spec, WeekRange(t, t))
        out.append(predict(model, row.X[0]))
    return np.array(out)


@pytest.mark.parametrize("spec", [FeatureSpec(10, 0), FeatureSpec(5, 3), FeatureSpec(8, 52)])
def test_rolling_matches_naive_loop(bench_data, benchmark, spec):
    ili, panel = bench_data.ili, bench_data.panel
    config = ExperimentConfig(benchmark.train_range, WeekRange(364, 403), benchmark.window)
    ranking = rank_by_method(ili, panel, RankingMethod.RESIDUAL_YA, benchmark.train_range)
    fast = rolling_estimate(ili, panel, ranking, spec, config)
    lam = 0.01
    fixed = rolling_estimate(ili, panel, ranking, spec, config, lam=lam)
    oracle = naive_rolling(ili, panel, ranking, spec, config, lam)
    np.testing.assert_allclose(fixed.values, oracle, atol=1e-9, rtol=0)
    observed = ili.slice(364, 403).values
    assert rmse(fixed.values, observed) == pytest.approx(rmse(oracle, observed), abs=1e-9)
    assert np.all(np.isfinite(fast.values))


def test_reselect_lambda_flag(bench_data, benchmark):
    ili, panel = bench_data.ili, bench_data.panel
    ranking = given_order(panel)
    config = ExperimentConfig(benchmark.train_range, WeekRange(364, 369), benchmark.window, reselect_lambda=True)
    est = rolling_estimate(ili, panel, ranking, FeatureSpec(3, 0), config)
    assert len(est) == 6 and np.all(np.isfinite(est.values))


def perfect_plus_noise(rng, weeks=120, q=4):
    t = np.arange(weeks)
    y = 3 + np.sin(2 * np.pi * t / 52) + 0.5 * rng.normal(size=weeks)
    m = np.column_stack([y] + [rng.normal(size=weeks) for _ in range(q - 1)])
    return WeeklySeries(0, y), QueryPanel(0, [f"q{i}" for i in range(q)], m)


def test_sweep_perfect_query_first(rng):
    ili, panel = perfect_plus_noise(rng)
    config = config_for(120, 79, window=40)
    sweep = sweep_top_n(ili, panel, given_order(panel), LINEAR, config)
    assert sweep.best_rmse.n == 1
    assert sweep.best_rmse.rmse < 1e-3


def test_sweep_enumeration(rng):
    ili, panel = perfect_plus_noise(rng, q=3)
    config = config_for(120, 79, window=40)
    assert [p.n for p in sweep_top_n(ili, panel, given_order(panel), LINEAR, config).points] == [1, 2, 3]
    assert [p.n for p in sweep_top_n(ili, panel, given_order(panel), AR3, config).points] == [0, 1, 2, 3]


def point(n, r, p):
    return SweepPoint(n, r, p, 0.1, np.zeros(2))


def test_sweep_selection_ties_and_nan():
    s = Sweep("m", "linear", (point(1, 0.5, math.nan), point(2, 0.4, 0.9), point(3, 0.4, 0.9)))
    assert s.best_rmse.n == 2
    assert s.best_pearson.n == 2
    assert Sweep("m", "linear", ()).best_rmse is None


def small_experiment(rng, **kw):
    ili, panel = perfect_plus_noise(rng, weeks=160, q=4)
    config = ExperimentConfig(
        WeekRange(0, 109), WeekRange(110, 159), 52, ranking_methods=(RankingMethod.RESIDUAL_YA,), **kw
    )
    return ili, panel, config


def test_single_method_single_spec_report(rng):
    ili, panel, config = small_experiment(rng, estimators=(LINEAR,))
    report = run_experiment(config, ili, panel)
    methods = {r.method for r in report.records if r.selection == "rmse"}
    assert methods == {"residual-ya", BASELINE_GIVEN, BASELINE_ALL, BASELINE_HISTORY}
    assert len([r for r in report.records if r.selection == "rmse"]) == 4
    none = report.record(BASELINE_HISTORY, "linear")
    assert none.n is None and none.rmse is None
    assert "n/a" in report.table("rmse")
    check_report_consistency(report)


def test_baselines_and_consistency(rng):
    ili, panel, config = small_experiment(rng, estimators=(LINEAR, AR3))
    report = run_experiment(config, ili, panel)
    q = panel.n_queries
    for est in ("linear", "ar3"):
        full = report.estimates[(BASELINE_ALL, est)]
        swept = report.sweep(BASELINE_GIVEN, est).point(q).estimates
        assert np.array_equal(full, swept)
    hist = report.record(BASELINE_HISTORY, "ar3")
    assert hist.n is None and hist.rmse is not None
    check_report_consistency(report)
    data = report.to_dict()
    assert set(data) == {"records", "config"}
    assert set(data["records"][0]) == {"selection", "method", "estimator", "n", "rmse", "pearson"}


def test_parallel_matches_serial(rng):
    ili, panel, config = small_experiment(rng, estimators=(LINEAR,))
    serial = run_experiment(config, ili, panel)
    ili2, panel2, config2 = small_experiment(np.random.default_rng(20170807), estimators=(LINEAR,), jobs=2)
    ili3, panel3, config3 = small_experiment(np.random.default_rng(20170807), estimators=(LINEAR,))
    parallel = run_experiment(config2, ili2, panel2)
    again = run_experiment(config3, ili3, panel3)
    assert parallel.to_dict()["records"] == again.to_dict()["records"]


def test_consistency_check_catches_tampering():
    sweep = Sweep("m", "linear", (point(1, 0.5, 0.8), point(2, 0.3, 0.9)))
    good = MetricsReport(
        (Record("rmse", "m", "linear", 2, 0.3, 0.9), Record("pearson", "m", "linear", 2, 0.3, 0.9)), (sweep,), {}
    )
    check_report_consistency(good)
    bad = MetricsReport(
        (Record("rmse", "m", "linear", 1, 0.5, 0.8), Record("pearson", "m", "linear", 2, 0.3, 0.9)), (sweep,), {}
    )
    with pytest.raises(AssertionError):
        check_report_consistency(bad)


def test_outbreak_weeks_favour_residual_ranking(bench_data, benchmark):
    """Seasonal-only features cannot follow an off-season outbreak; residual-ranked ones can."""
    ili, panel = bench_data.ili, bench_data.panel
    config = ExperimentConfig(benchmark.train_range, benchmark.test_range, benchmark.window)
    weeks = config.test_range.weeks()
    mask = np.zeros(weeks.size, dtype=bool)
    for o in benchmark.synth.outbreaks:
        mask |= np.abs(weeks - o.week) <= 2 * o.width
    observed = ili.slice(config.test_range.first, config.test_range.last).values[mask]
    ranking = rank_by_method(ili, panel, RankingMethod.RESIDUAL_YA, benchmark.train_range)
    ours = rolling_estimate(ili, panel, ranking, LINEAR.with_queries(10), config).values[mask]
    spurious = [i for i, k in enumerate(bench_data.truth["kinds"]) if k == "spurious"]
    seasonal_only = panel.select(spurious)
    for n in (10, len(spurious)):
        theirs = rolling_estimate(ili, seasonal_only, given_order(seasonal_only), LINEAR.with_queries(n), config)
        assert rmse(ours, observed) < rmse(theirs.values[mask], observed)
