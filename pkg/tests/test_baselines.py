import numpy as np
import pytest

from conftest import random_dataset
from glop.baselines import (BenchmarkConfig, DirtyModel, cv_dirty_model,
                            cv_pooled_lasso, detect_outliers, dirty_mse,
                            export_benchmark_csv, export_benchmark_json,
                            fit_pooled_lasso, mse, nearest_rank_percentile,
                            prox_linf_row, run_table1_benchmark,
                            solve_dirty_model)
from glop.bcm import GlopModel, GlopPenalty
from glop.selection import CvGrid


def test_nearest_rank_percentile():
    vals = list(range(1, 11))
    assert nearest_rank_percentile(vals, 90) == 9.0
    assert nearest_rank_percentile(vals, 100) == 10.0
    assert nearest_rank_percentile(vals, 50) == 5.0
    assert nearest_rank_percentile([7.0], 90) == 7.0
    with pytest.raises(ValueError):
        nearest_rank_percentile(vals, 0)
    with pytest.raises(ValueError):
        nearest_rank_percentile([], 50)


def _model_with_local(masses):
    p = 2
    kappa = len(masses)
    L = np.zeros((p, kappa))
    L[0] = masses
    return GlopModel(np.zeros(p), L, GlopPenalty(1.0, 1.0), 0.0, 0, True,
                     ("x1", "x2"), tuple(f"p{k}" for k in range(kappa)))


def test_detect_outliers_strict_threshold():
    model = _model_with_local([0.0, 0.0, 0.0, 5.0])
    rep = detect_outliers(model, percentile=50.0)
    assert rep.threshold == 0.0
    assert rep.flagged_patient_ids == ("p3",)
    assert rep.nonzero_local[0][0] == "p3"
    # the maximum never exceeds itself strictly
    rep100 = detect_outliers(model, percentile=100.0)
    assert rep100.flagged_patient_ids == ()


def test_detect_outliers_all_zero_note():
    model = _model_with_local([0.0, 0.0])
    rep = detect_outliers(model, percentile=90.0)
    assert rep.flagged_patient_ids == ()
    assert "nothing to flag" in rep.note
    doc = rep.to_dict()
    assert doc["threshold_rule"].startswith("nearest-rank")


def _proj_l1_ball(v, r):
    # reference projection for the Moreau check
    if np.abs(v).sum() <= r:
        return v.copy()
    u = np.sort(np.abs(v))[::-1]
    css = np.cumsum(u)
    rho = np.max(np.flatnonzero(u * np.arange(1, v.size + 1) > css - r))
    theta = (css[rho] - r) / (rho + 1.0)
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def test_prox_linf_moreau(rng):
    for _ in range(10):
        v = rng.standard_normal(6) * 3
        t = float(rng.uniform(0.1, 2.0))
        got = prox_linf_row(v, t)
        np.testing.assert_allclose(got, v - _proj_l1_ball(v, t), atol=1e-10)
    np.testing.assert_allclose(prox_linf_row(np.array([0.3, -0.2]), 1.0), 0.0)
    with pytest.raises(ValueError):
        prox_linf_row(np.ones(2), -1.0)


def _dirty_objective(ds, model):
    obj = 0.0
    for k, b in enumerate(ds.blocks):
        r = b.targets - b.design @ model.patient_coefficients(k)
        obj += float(r @ r)
    obj += model.lambda_b * np.abs(model.B).max(axis=1).sum()
    obj += model.lambda_s * np.abs(model.S).sum()
    return obj


def test_dirty_model_objective_and_limits(rng):
    ds = random_dataset(rng, kappa=3, p=2, n=12)
    model = solve_dirty_model(ds, 2.0, 4.0, tolerance=1e-10)
    assert model.converged
    assert model.objective == pytest.approx(_dirty_objective(ds, model), rel=1e-9)
    # huge penalties force the zero model
    big = solve_dirty_model(ds, 1e6, 1e6)
    assert np.all(big.B == 0.0) and np.all(big.S == 0.0)
    # zero penalties reach per-patient least squares
    free = solve_dirty_model(ds, 0.0, 0.0, tolerance=1e-12)
    for k, b in enumerate(ds.blocks):
        ols, *_ = np.linalg.lstsq(b.design, b.targets, rcond=None)
        np.testing.assert_allclose(free.patient_coefficients(k), ols, atol=1e-5)


def test_dirty_model_is_minimizer(rng):
    ds = random_dataset(rng, kappa=2, p=2, n=10)
    model = solve_dirty_model(ds, 1.0, 2.0, tolerance=1e-11)
    base = _dirty_objective(ds, model)
    for _ in range(10):
        pert = DirtyModel(model.B + 0.02 * rng.standard_normal(model.B.shape),
                          model.S + 0.02 * rng.standard_normal(model.S.shape),
                          model.lambda_b, model.lambda_s, 0.0, 0, True)
        assert _dirty_objective(ds, pert) >= base - 1e-7


def test_dirty_mse(rng):
    ds = random_dataset(rng, kappa=2, p=2, n=10)
    model = solve_dirty_model(ds, 0.5, 1.0)
    got = dirty_mse(model, ds)
    sse = sum(float(((b.targets - b.design @ model.patient_coefficients(k)) ** 2).sum())
              for k, b in enumerate(ds.blocks))
    assert got == pytest.approx(sse / ds.total_rows)


def test_fit_pooled_lasso_matches_direct(rng):
    from glop.lasso import LassoProblem, solve_weighted_lasso
    ds = random_dataset(rng, kappa=2, p=3, n=10)
    sol = fit_pooled_lasso(ds, 5.0, tolerance=1e-12)
    X = np.vstack([b.design for b in ds.blocks])
    y = np.concatenate([b.targets for b in ds.blocks])
    direct = solve_weighted_lasso(
        LassoProblem(X, y, np.full(3, 5.0), loss_scale=0.5 / X.shape[0]),
        tolerance=1e-12)
    np.testing.assert_allclose(sol.coefficients, direct.coefficients, atol=1e-10)


def test_cv_pooled_lasso_tie_prefers_larger(rng):
    ds = random_dataset(rng, kappa=2, p=2, n=12, coef_scale=0.0, noise_sd=1.0)
    # pure-noise targets: all large penalties give the null model, scores tie
    lam, sol, table = cv_pooled_lasso(ds, lambda_values=(50.0, 75.0, 100.0),
                                      n_folds=3, seed=0)
    assert lam == 100.0
    assert np.all(sol.coefficients == 0.0)
    assert len(table) == 3


def test_cv_dirty_model_runs(rng):
    ds = random_dataset(rng, kappa=2, p=2, n=14)
    grid = CvGrid(lambda_g_values=(0.0, 2.0), lambda_l_values=(0.0, 2.0))
    model, table = cv_dirty_model(ds, grid=grid, n_folds=3, seed=0,
                                  tolerance=1e-7)
    assert (model.lambda_b, model.lambda_s) in grid.cells()
    assert len(table) == len(grid.cells())


def test_mse_helper():
    assert mse(np.array([1.0, 2.0]), np.array([1.0, 0.0])) == 2.0


def test_benchmark_smoke(tmp_path):
    config = BenchmarkConfig(p=8, kappa=8, n=16, trials=2, seed=0, n_test=50,
                             n_folds=3,
                             grid=CvGrid(lambda_g_values=(0.0, 20.0),
                                         lambda_l_values=(0.0, 20.0)),
                             cv_tolerance=1e-5, fit_tolerance=1e-7)
    report = run_table1_benchmark(config, methods=("glop", "lasso"))
    assert set(report.methods) == {"glop", "lasso"}
    assert len(report.per_trial_mse["glop"]) == 2
    assert ("glop", "lasso") in report.t_tests
    assert report.mean_mse["glop"] < report.mean_mse["lasso"]
    csv_path = tmp_path / "bench.csv"
    json_path = tmp_path / "bench.json"
    export_benchmark_csv(report, csv_path)
    export_benchmark_json(report, json_path)
    assert csv_path.read_text().startswith("p,kappa,n,method")
    assert "per_trial_mse" in json_path.read_text()
    with pytest.raises(ValueError):
        run_table1_benchmark(BenchmarkConfig(trials=1), methods=("glop",))
    with pytest.raises(ValueError):
        run_table1_benchmark(config, methods=())
