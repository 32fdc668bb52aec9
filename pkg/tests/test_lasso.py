import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glop.errors import CapacityError
from glop.lasso import (LassoProblem, brute_force_lasso_oracle, kkt_residuals,
                        objective_value, soft_threshold, solve_weighted_lasso)


def test_soft_threshold():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    assert soft_threshold(0.5, 1.0) == 0.0
    assert soft_threshold(0.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


def test_single_column_analytic():
    # 0.5*||y - x b||^2 + lam|b| has closed form ST(x'y, lam) / x'x
    X = np.array([[1.0], [1.0]])
    y = np.array([1.0, 1.0])
    for lam in (0.0, 0.5, 1.0, 3.0):
        prob = LassoProblem(X, y, np.array([lam]))
        sol = solve_weighted_lasso(prob, tolerance=1e-12)
        expected = soft_threshold(2.0, lam) / 2.0
        assert abs(sol.coefficients[0] - expected) < 1e-10
        assert sol.max_kkt_violation < 1e-10


def test_zero_penalty_gives_least_squares(rng):
    X = rng.standard_normal((20, 4))
    y = rng.standard_normal(20)
    prob = LassoProblem(X, y, np.zeros(4))
    sol = solve_weighted_lasso(prob, tolerance=1e-13)
    ols, *_ = np.linalg.lstsq(X, y, rcond=None)
    np.testing.assert_allclose(sol.coefficients, ols, atol=1e-8)


def test_loss_scale_changes_solution(rng):
    X = rng.standard_normal((15, 3))
    y = rng.standard_normal(15)
    w = np.full(3, 2.0)
    half = solve_weighted_lasso(LassoProblem(X, y, w, loss_scale=0.5))
    unnorm = solve_weighted_lasso(LassoProblem(X, y, w, loss_scale=1.0))
    # a larger loss weight shrinks less
    assert np.abs(unnorm.coefficients).sum() >= np.abs(half.coefficients).sum() - 1e-12


def test_solver_matches_oracle(rng):
    for _ in range(25):
        n = int(rng.integers(2, 9))
        m = int(rng.integers(1, 6))
        X = rng.standard_normal((n, m))
        y = rng.standard_normal(n)
        w = rng.uniform(0.0, 2.0, m)
        w[rng.random(m) < 0.3] = 0.0
        prob = LassoProblem(X, y, w, loss_scale=float(rng.uniform(0.2, 1.5)))
        cd = solve_weighted_lasso(prob, tolerance=1e-12)
        oracle = brute_force_lasso_oracle(prob)
        assert cd.objective <= oracle.objective + 1e-9
        np.testing.assert_allclose(X @ cd.coefficients, X @ oracle.coefficients,
                                   atol=1e-6)


def test_oracle_capacity():
    X = np.ones((2, 9))
    with pytest.raises(CapacityError):
        brute_force_lasso_oracle(LassoProblem(X, np.ones(2), np.ones(9)))


def test_warm_start_and_validation(rng):
    X = rng.standard_normal((10, 3))
    y = rng.standard_normal(10)
    prob = LassoProblem(X, y, np.ones(3))
    cold = solve_weighted_lasso(prob, tolerance=1e-12)
    warm = solve_weighted_lasso(prob, tolerance=1e-12,
                                warm_start=cold.coefficients)
    np.testing.assert_allclose(warm.coefficients, cold.coefficients, atol=1e-9)
    assert warm.iterations <= cold.iterations
    with pytest.raises(ValueError):
        solve_weighted_lasso(prob, warm_start=np.zeros(4))
    with pytest.raises(ValueError):
        solve_weighted_lasso(prob, tolerance=0.0)


def test_problem_validation(rng):
    X = rng.standard_normal((5, 2))
    with pytest.raises(ValueError):
        LassoProblem(X, np.zeros(4), np.ones(2))
    with pytest.raises(ValueError):
        LassoProblem(X, np.zeros(5), np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        LassoProblem(X, np.zeros(5), np.ones(2), loss_scale=0.0)
    with pytest.raises(ValueError):
        LassoProblem(X * np.nan, np.zeros(5), np.ones(2))


def test_dead_column_warns():
    X = np.zeros((3, 1))
    with pytest.warns(RuntimeWarning):
        sol = solve_weighted_lasso(LassoProblem(X, np.ones(3), np.zeros(1)))
    assert sol.coefficients[0] == 0.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_solution_is_a_minimizer(seed):
    gen = np.random.default_rng(seed)
    n, m = int(gen.integers(3, 12)), int(gen.integers(1, 5))
    X = gen.standard_normal((n, m))
    y = gen.standard_normal(n)
    w = gen.uniform(0.0, 3.0, m)
    prob = LassoProblem(X, y, w)
    sol = solve_weighted_lasso(prob, tolerance=1e-12)
    base = sol.objective
    assert abs(base - objective_value(prob, sol.coefficients)) < 1e-12
    assert sol.max_kkt_violation == pytest.approx(
        float(kkt_residuals(prob, sol.coefficients).max(initial=0.0)))
    for _ in range(10):
        perturbed = sol.coefficients + 0.05 * gen.standard_normal(m)
        assert objective_value(prob, perturbed) >= base - 1e-8
