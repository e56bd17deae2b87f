import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seasonal_ili import _lasso
from seasonal_ili.errors import ArityMismatch, ConvergenceWarning, InsufficientHistory, InvalidConfig, SpanMismatch
from seasonal_ili.estimators import (
    AR3,
    AR52,
    LINEAR,
    DesignMatrix,
    EstimatorSpec,
    FeatureSpec,
    FittedModel,
    LassoConfig,
    build_design,
    critical_lambda,
    cv_curve,
    cv_folds,
    estimator_spec,
    fit_lasso,
    lambda_grid,
    lasso_objective,
    lasso_path,
    predict,
    select_lambda_cv,
)
from seasonal_ili.ranking import Ranking, RankingMethod, given_order
from seasonal_ili.timeseries import QueryPanel, WeeklySeries, WeekRange

CD = LassoConfig(solver="cd")


def standardized(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    return (X - mu) / sd


def kkt_violation(X, y, model, lam):
    """Largest violation of the lasso optimality conditions on the standardized scale."""
    Xs = standardized(X)
    beta = model.coefficients * X.std(axis=0)
    r = (y - y.mean()) - Xs @ beta
    g = Xs.T @ r / len(y)
    viol = np.where(beta != 0, np.abs(g - lam * np.sign(beta)), np.maximum(np.abs(g) - lam, 0.0))
    return viol.max()


def reference_cd(X, y, lam, sweeps=20000, tol=1e-14):
    """Textbook cyclic coordinate descent on standardized columns, run to a tight tolerance."""
    Xs = standardized(X)
    yc = y - y.mean()
    T, p = Xs.shape
    beta = np.zeros(p)
    for _ in range(sweeps):
        delta = 0.0
        for j in range(p):
            r = yc - Xs @ beta + Xs[:, j] * beta[j]
            z = Xs[:, j] @ r / T
            new = np.sign(z) * max(abs(z) - lam, 0.0)
            delta = max(delta, abs(new - beta[j]))
            beta[j] = new
        if delta < tol:
            break
    coef = beta / X.std(axis=0)
    return y.mean() - X.mean(axis=0) @ coef, coef


def ols(X, y):
    A = np.column_stack([np.ones(len(y)), X])
    sol = np.linalg.solve(A.T @ A, A.T @ y)
    return sol[0], sol[1:]


# -- specs and designs


def test_feature_spec_rules():
    assert FeatureSpec(0, 3).include_trend
    assert not FeatureSpec(2, 0).include_trend
    assert FeatureSpec(100, 52).n_columns == 153
    with pytest.raises(InvalidConfig):
        FeatureSpec(0, 0)
    with pytest.raises(InvalidConfig):
        FeatureSpec(2, 0, include_trend=True)


def test_estimator_specs():
    assert LINEAR.min_queries == 1 and AR52.min_queries == 0
    assert estimator_spec("ar7") == EstimatorSpec("ar7", 7)
    assert estimator_spec("ar3") is AR3
    with pytest.raises(InvalidConfig):
        estimator_spec("quadratic")


def small_data(rng, weeks=30, q=12):
    ili = WeeklySeries(0, rng.normal(size=weeks))
    panel = QueryPanel(0, [f"q{i}" for i in range(q)], rng.normal(size=(weeks, q)))
    return ili, panel


def test_design_lags_and_trend(rng):
    ili, panel = small_data(rng)
    d = build_design(ili, None, None, FeatureSpec(0, 3), WeekRange(0, 29))
    assert d.column_names == ("trend", "lag_1", "lag_2", "lag_3")
    assert d.n_rows == 27 and d.weeks[0] == 3
    row = list(d.weeks).index(10)
    np.testing.assert_array_equal(d.X[row], [10.0, ili.at(9), ili.at(8), ili.at(7)])
    assert d.y[row] == ili.at(10)


def test_design_top_n_columns_in_rank_order(rng):
    ili, panel = small_data(rng)
    order = [5, 9] + [i for i in range(12) if i not in (5, 9)]
    ranking = Ranking(RankingMethod.RESIDUAL_YA, order)
    d = build_design(ili, panel, ranking, FeatureSpec(2, 0), WeekRange(4, 20))
    assert d.column_names == ("q5", "q9")
    np.testing.assert_array_equal(d.X, panel.matrix[4:21][:, [5, 9]])
    assert d.n_rows == 17


def test_design_reference_model_feature_set(rng):
    ili, panel = small_data(rng, weeks=200, q=100)
    d = build_design(ili, panel, given_order(panel), FeatureSpec(100, 52), WeekRange(0, 199))
    assert d.n_columns == 153
    assert d.column_names[:3] == ("trend", "lag_1", "lag_2")
    assert d.column_names[52] == "lag_52" and d.column_names[53] == "q0"
    assert d.n_rows == 200 - 52


def test_design_errors(rng):
    ili, panel = small_data(rng)
    with pytest.raises(InsufficientHistory):
        build_design(ili, None, None, FeatureSpec(0, 3), WeekRange(0, 2))
    with pytest.raises(SpanMismatch):
        build_design(ili, None, None, FeatureSpec(0, 3), WeekRange(0, 40))
    with pytest.raises(InvalidConfig):
        build_design(ili, panel, given_order(panel), FeatureSpec(13, 0), WeekRange(0, 29))


def test_design_matrix_validation():
    with pytest.raises(ArityMismatch):
        DesignMatrix(np.zeros((3, 2)), np.zeros(4), np.arange(3), ("a", "b"))
    d = DesignMatrix(np.ones((3, 1)), np.zeros(3), np.arange(3), ("a",))
    with pytest.raises(ValueError):
        d.X[0, 0] = 2.0


# -- lasso fits


def test_lambda_zero_matches_ols(rng):
    X = rng.normal(size=(104, 8))
    y = X @ rng.normal(size=8) + rng.normal(size=104)
    model = fit_lasso((X, y), 0.0)
    b0, b = ols(X, y)
    np.testing.assert_allclose(model.coefficients, b, atol=1e-6)
    assert model.intercept == pytest.approx(b0, abs=1e-6)
    np.testing.assert_allclose(predict(model, X), b0 + X @ b, atol=1e-6)


def test_critical_lambda_null_model(rng):
    X = rng.normal(size=(50, 5)) + 3.0
    y = X @ rng.normal(size=5) + 2.0
    lam_c = critical_lambda((X, y))
    Xs = standardized(X)
    assert lam_c == pytest.approx(np.max(np.abs(Xs.T @ (y - y.mean()))) / 50, rel=1e-12)
    for lam in (lam_c, 2 * lam_c):
        model = fit_lasso((X, y), lam)
        assert np.all(model.coefficients == 0.0)
        assert model.intercept == y.mean()
    assert np.count_nonzero(fit_lasso((X, y), 0.99 * lam_c).coefficients) >= 1


def test_two_feature_toy_against_reference(rng):
    x1 = rng.normal(size=80)
    x2 = rng.normal(size=80)
    X = np.column_stack([x1, x2])
    y = 3 * x1
    lam = 0.3
    for config in (LassoConfig(), CD):
        model = fit_lasso((X, y), lam, config)
        ref_b0, ref = reference_cd(X, y, lam)
        assert model.coefficients[1] == 0.0
        assert 0 < model.coefficients[0] < 3
        np.testing.assert_allclose(model.coefficients, ref, atol=1e-6)
        assert model.intercept == pytest.approx(ref_b0, abs=1e-6)


@pytest.mark.parametrize("solver", ["active-set", "cd"])
def test_solvers_match_reference_on_correlated_design(rng, solver):
    base = rng.normal(size=(60, 3))
    X = np.column_stack([base, base @ rng.normal(size=(3, 4)) + 0.1 * rng.normal(size=(60, 4))])
    y = X @ rng.normal(size=7) + rng.normal(size=60)
    lam = 0.05 * critical_lambda((X, y))
    model = fit_lasso((X, y), lam, LassoConfig(solver=solver, tolerance=1e-10))
    _, ref = reference_cd(X, y, lam)
    np.testing.assert_allclose(model.coefficients, ref, atol=1e-5)


def test_cd_objective_non_increasing_per_sweep(rng):
    X = rng.normal(size=(70, 10))
    y = X[:, :3] @ [1.0, -2.0, 0.5] + rng.normal(size=70)
    lam = 0.05
    XsT, _, _, usable = _lasso.standardize(X, True)
    yc = y - y.mean()
    values = []
    for sweeps in range(1, 30):
        beta, _, _ = _lasso.cd_solve(XsT, yc, usable, lam, np.zeros(10), 0.0, sweeps)
        values.append(_lasso.objective(XsT, yc, beta, lam))
    assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 25), st.floats(1e-3, 0.9))
def test_kkt_holds(seed, p, frac):
    r = np.random.default_rng(seed)
    X = r.normal(size=(40, p))
    y = X @ (r.normal(size=p) * (r.random(p) < 0.5)) + r.normal(size=40)
    lam = frac * critical_lambda((X, y))
    for config in (LassoConfig(), CD):
        model = fit_lasso((X, y), lam, config)
        assert model.converged
        tol = 1e-6 if config.solver == "cd" else 1e-8
        assert kkt_violation(X, y, model, lam) <= tol * max(1.0, lam)


def test_more_columns_than_rows_falls_back_and_converges(rng):
    X = rng.normal(size=(30, 60))
    y = X[:, 0] - X[:, 1] + 0.1 * rng.normal(size=30)
    lam = 1e-4 * critical_lambda((X, y))
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        model = fit_lasso((X, y), lam)
    assert model.converged
    assert kkt_violation(X, y, model, lam) < 1e-5


def test_constant_column_gets_zero(rng):
    X = np.column_stack([rng.normal(size=40), np.full(40, 7.0)])
    y = 2 * X[:, 0] + 1
    model = fit_lasso((X, y), 0.0)
    assert model.coefficients[1] == 0.0
    assert model.coefficients[0] == pytest.approx(2.0, abs=1e-9)
    assert model.intercept == pytest.approx(1.0, abs=1e-9)


def test_unstandardized_matches_reference(rng):
    X = rng.normal(size=(50, 4))
    y = X @ [1.0, 0.0, -1.0, 0.5] + 0.3 * rng.normal(size=50)
    lam = 0.1
    model = fit_lasso((X, y), lam, LassoConfig(standardize=False))
    Xc = X - X.mean(axis=0)
    g = Xc.T @ ((y - y.mean()) - Xc @ model.coefficients) / 50
    nz = model.coefficients != 0
    np.testing.assert_allclose(g[nz], lam * np.sign(model.coefficients[nz]), atol=1e-9)
    assert np.all(np.abs(g[~nz]) <= lam + 1e-9)


def test_warm_start_reaches_same_solution(rng):
    X = rng.normal(size=(60, 6))
    y = X @ rng.normal(size=6) + rng.normal(size=60)
    cold = fit_lasso((X, y), 0.05)
    warm = fit_lasso((X, y), 0.04, init=cold)
    again = fit_lasso((X, y), 0.04)
    np.testing.assert_allclose(warm.coefficients, again.coefficients, atol=1e-9)
    with pytest.raises(ArityMismatch):
        fit_lasso((X[:, :3], y), 0.04, init=cold)


def test_path_matches_individual_fits(rng):
    X = rng.normal(size=(80, 9))
    y = X @ rng.normal(size=9) + rng.normal(size=80)
    grid = lambda_grid((X, y), LassoConfig(n_lambdas=12))
    intercepts, coefs, converged = lasso_path((X, y), grid)
    assert converged.all()
    for k, lam in enumerate(grid):
        single = fit_lasso((X, y), lam)
        np.testing.assert_allclose(coefs[k], single.coefficients, atol=1e-9)
        assert intercepts[k] == pytest.approx(single.intercept, abs=1e-9)
    assert np.all(coefs[0] == 0.0)


def test_objective_decreases_towards_optimum(rng):
    X = rng.normal(size=(50, 5))
    y = X @ rng.normal(size=5) + rng.normal(size=50)
    model = fit_lasso((X, y), 0.1)
    best = lasso_objective((X, y), model)
    for _ in range(20):
        nudged = FittedModel(0.0, model.coefficients + 0.01 * rng.normal(size=5), 0.1)
        assert lasso_objective((X, y), nudged) >= best - 1e-15


def test_lambda_grid_shape(rng):
    X = rng.normal(size=(40, 3))
    y = X[:, 0] + rng.normal(size=40)
    grid = lambda_grid((X, y))
    assert grid.size == 100 and np.all(np.diff(grid) < 0)
    assert grid[0] == pytest.approx(critical_lambda((X, y)), rel=1e-15)
    assert grid[-1] == pytest.approx(1e-4 * grid[0], rel=1e-12)


def test_lasso_config_validation():
    with pytest.raises(InvalidConfig):
        LassoConfig(lambda_grid=(0.1, 0.2))
    with pytest.raises(InvalidConfig):
        LassoConfig(tolerance=0.0)
    with pytest.raises(InvalidConfig):
        LassoConfig(solver="newton")


# -- cross-validation


def test_cv_folds_contiguous_and_seeded():
    folds = cv_folds(10, 3)
    assert [f.tolist() for f in folds] == [[0, 1, 2, 3], [4, 5, 6], [7, 8, 9]]
    a = cv_folds(30, 3, shuffle_seed=5)
    b = cv_folds(30, 3, shuffle_seed=5)
    assert all(np.array_equal(x, z) for x, z in zip(a, b))
    assert sorted(np.concatenate(a).tolist()) == list(range(30))


def test_cv_singleton_grid(rng):
    X = rng.normal(size=(30, 3))
    y = rng.normal(size=30)
    assert select_lambda_cv((X, y), LassoConfig(lambda_grid=(0.123,))) == 0.123


def test_cv_noiseless_linear_prefers_smallest(rng):
    X = rng.normal(size=(90, 4))
    y = X @ [1.0, -2.0, 0.5, 3.0] + 1.0
    config = LassoConfig(n_lambdas=20)
    grid, score = cv_curve((X, y), config)
    assert np.all(np.diff(score) < 0)
    assert select_lambda_cv((X, y), config) == grid[-1]


def test_cv_pure_noise_prefers_heavy_penalty(rng):
    X = rng.normal(size=(90, 10))
    y = rng.normal(size=90)
    grid = lambda_grid((X, y))
    chosen = select_lambda_cv((X, y))
    assert chosen >= 0.25 * grid[0]


def test_cv_is_deterministic(rng):
    X = rng.normal(size=(60, 5))
    y = X[:, 0] + rng.normal(size=60)
    assert select_lambda_cv((X, y)) == select_lambda_cv((X, y))


# -- predict


def test_predict_examples():
    const = FittedModel(2.5, np.zeros(3), 0.0)
    assert predict(const, [1.0, 2.0, 3.0]) == 2.5
    dot = FittedModel(0.0, np.array([1.0, 1.0]), 0.0)
    assert predict(dot, [3.0, 4.0]) == 7.0
    np.testing.assert_array_equal(predict(dot, [[3.0, 4.0], [1.0, 0.0]]), [7.0, 1.0])
    with pytest.raises(ArityMismatch):
        predict(dot, [1.0, 2.0, 3.0])


def test_fitted_model_serializes(rng):
    X = rng.normal(size=(30, 2))
    y = X[:, 0]
    d = DesignMatrix(X, y, np.arange(30), ("a", "b"), FeatureSpec(2))
    data = fit_lasso(d, 0.01).to_dict()
    assert set(data["coefficients"]) == {"a", "b"}
    assert data["spec"] == {"n_queries": 2, "ar_lags": 0, "include_trend": False}
