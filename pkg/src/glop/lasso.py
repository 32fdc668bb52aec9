"""Weighted-penalty lasso: coordinate-descent solver and an exact enumeration oracle.

The objective throughout is

    loss_scale * ||y - X b||^2 + sum_i w_i |b_i|

so a conventional (1/2)||.||^2 lasso uses loss_scale = 0.5 and the
unnormalized sum-of-squares variant uses loss_scale = 1.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import CapacityError, NumericalError

DEFAULT_TOLERANCE = 1e-8
DEFAULT_MAX_ITERATIONS = 100_000


@dataclass(frozen=True)
class LassoProblem:
    design: np.ndarray            # (n, m)
    response: np.ndarray          # (n,)
    penalty_weights: np.ndarray   # (m,), each >= 0
    loss_scale: float = 0.5

    def __post_init__(self):
        X = np.ascontiguousarray(self.design, dtype=float)
        y = np.ascontiguousarray(self.response, dtype=float)
        w = np.ascontiguousarray(self.penalty_weights, dtype=float)
        if X.ndim != 2:
            raise ValueError("design must be 2-D")
        if y.shape != (X.shape[0],):
            raise ValueError("response length does not match design rows")
        if w.shape != (X.shape[1],):
            raise ValueError("penalty_weights length does not match design columns")
        if not np.isfinite(X).all() or not np.isfinite(y).all():
            raise ValueError("design and response must be finite")
        if not np.isfinite(w).all() or (w < 0).any():
            raise ValueError("penalty weights must be finite and >= 0")
        if not self.loss_scale > 0:
            raise ValueError("loss_scale must be > 0")
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "penalty_weights", w)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def m(self) -> int:
        return self.design.shape[1]


@dataclass(frozen=True)
class LassoSolution:
    coefficients: np.ndarray
    objective: float
    iterations: int
    converged: bool
    max_kkt_violation: float


def soft_threshold(z: float, gamma: float) -> float:
    """sign(z) * max(|z| - gamma, 0)."""
    if gamma < 0:
        raise ValueError("threshold must be >= 0")
    mag = abs(z) - gamma
    if mag <= 0:
        return 0.0
    return mag if z > 0 else -mag


def objective_value(problem: LassoProblem, coefficients: np.ndarray) -> float:
    r = problem.response - problem.design @ coefficients
    return float(problem.loss_scale * r @ r
                 + problem.penalty_weights @ np.abs(coefficients))


def kkt_residuals(problem: LassoProblem, coefficients: np.ndarray) -> np.ndarray:
    """Per-coordinate violation of the first-order optimality conditions."""
    beta = np.asarray(coefficients, dtype=float)
    if beta.shape != (problem.m,):
        raise ValueError("coefficient length does not match design columns")
    grad = -2.0 * problem.loss_scale * (problem.design.T @ (problem.response - problem.design @ beta))
    w = problem.penalty_weights
    viol = np.where(beta != 0,
                    np.abs(grad + w * np.sign(beta)),
                    np.maximum(np.abs(grad) - w, 0.0))
    return viol


def solve_weighted_lasso(problem: LassoProblem, tolerance: float = DEFAULT_TOLERANCE,
                         max_iterations: int = DEFAULT_MAX_ITERATIONS,
                         warm_start: np.ndarray | None = None) -> LassoSolution:
    """Cyclic coordinate descent in fixed order 1..m (deterministic)."""
    if tolerance <= 0:
        raise ValueError("tolerance must be > 0")
    colsq = np.einsum("ij,ij->j", problem.design, problem.design)
    dead = (colsq == 0) & (problem.penalty_weights == 0)
    if dead.any():
        warnings.warn("all-zero column with zero penalty; coefficient pinned at 0",
                      RuntimeWarning, stacklevel=2)
    if warm_start is not None:
        beta = np.array(warm_start, dtype=float)
        if beta.shape != (problem.m,):
            raise ValueError("warm start length does not match design columns")
    else:
        beta = np.zeros(problem.m)
    iters, converged = _kernels.cd_weighted_lasso(
        problem.design, problem.response, problem.penalty_weights,
        problem.loss_scale, beta, tolerance, max_iterations)
    if not np.isfinite(beta).all():
        raise NumericalError("coordinate descent produced non-finite coefficients")
    viol = kkt_residuals(problem, beta)
    return LassoSolution(coefficients=beta, objective=objective_value(problem, beta),
                         iterations=int(iters), converged=bool(converged),
                         max_kkt_violation=float(viol.max(initial=0.0)))


def brute_force_lasso_oracle(problem: LassoProblem, max_columns: int = 8) -> LassoSolution:
    """Exact solution by enumerating all sign patterns (testing oracle).

    For each pattern in {-1, 0, +1}^m the stationarity system restricted to
    the nonzero coordinates is solved, then sign consistency and the
    zero-coordinate subgradient bound are checked; the feasible candidate
    with the smallest objective wins.
    """
    m = problem.m
    if m > max_columns:
        raise CapacityError(f"oracle enumeration limited to {max_columns} columns, got {m}")
    X, y, w, c = problem.design, problem.response, problem.penalty_weights, problem.loss_scale
    xty = X.T @ y
    best = None
    for signs in itertools.product((-1.0, 0.0, 1.0), repeat=m):
        s = np.array(signs)
        active = np.flatnonzero(s != 0)
        beta = np.zeros(m)
        if active.size:
            Xa = X[:, active]
            G = Xa.T @ Xa
            rhs = xty[active] - w[active] * s[active] / (2.0 * c)
            sol, *_ = np.linalg.lstsq(G, rhs, rcond=None)
            if np.linalg.norm(G @ sol - rhs) > 1e-9 * (1.0 + np.linalg.norm(rhs)):
                continue  # stationarity unattainable for this pattern
            if np.any(sol * s[active] < -1e-12):
                continue
            beta[active] = sol
        grad = -2.0 * c * (X.T @ (y - X @ beta))
        inactive = np.flatnonzero(s == 0)
        if np.any(np.abs(grad[inactive]) > w[inactive] + 1e-8):
            continue
        obj = objective_value(problem, beta)
        if best is None or obj < best[0]:
            best = (obj, beta)
    if best is None:
        raise NumericalError("oracle found no KKT-consistent candidate")
    obj, beta = best
    viol = kkt_residuals(problem, beta)
    return LassoSolution(coefficients=beta, objective=obj, iterations=0,
                         converged=True, max_kkt_violation=float(viol.max(initial=0.0)))
