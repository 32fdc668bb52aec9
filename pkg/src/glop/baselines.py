"""Predictive-outlier detection, baseline models (pooled lasso, dirty model),
and the synthetic benchmark harness.
"""
from __future__ import annotations

import csv as _csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels
from .bcm import UNNORMALIZED, GlopModel, evaluate_mse
from .data import (MultiTaskDataset, generate_tau_population, holdout_testset)
from .errors import NumericalError
from .lasso import LassoProblem, solve_weighted_lasso
from .selection import CvGrid, select_from_table, stratified_folds


def mse(predictions: np.ndarray, targets: np.ndarray) -> float:
    d = np.asarray(predictions, dtype=float) - np.asarray(targets, dtype=float)
    return float(d @ d) / d.size


def nearest_rank_percentile(values, percentile: float) -> float:
    """Nearest-rank definition: the ceil(P/100 * N)-th smallest value."""
    if not 0 < percentile <= 100:
        raise ValueError("percentile must be in (0, 100]")
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("need at least one value")
    rank = math.ceil(percentile / 100.0 * v.size)
    return float(v[rank - 1])


@dataclass(frozen=True)
class OutlierReport:
    local_mass: np.ndarray            # s_k = sum_j |L_jk| per patient
    threshold: float
    percentile: float
    flagged_patient_ids: tuple
    nonzero_local: tuple              # (patient_id, ((feature, coef), ...)) pairs
    note: str = ""

    def to_dict(self) -> dict:
        return {"local_mass": self.local_mass.tolist(),
                "threshold": self.threshold,
                "percentile": self.percentile,
                "threshold_rule": "nearest-rank percentile, strict inequality",
                "flagged_patient_ids": list(self.flagged_patient_ids),
                "nonzero_local": [
                    {"patient_id": pid,
                     "coefficients": [{"feature": f, "value": v} for f, v in coefs]}
                    for pid, coefs in self.nonzero_local],
                "note": self.note}


def detect_outliers(model: GlopModel, percentile: float = 90.0) -> OutlierReport:
    """Flag patients whose local coefficient mass exceeds the stated percentile
    of all per-patient masses (strictly)."""
    s = np.abs(model.local_coefs).sum(axis=0)
    threshold = nearest_rank_percentile(s, percentile)
    flagged = tuple(model.patient_ids[k] for k in range(model.kappa)
                    if s[k] > threshold)
    nonzero = []
    for k in range(model.kappa):
        coefs = tuple((model.feature_names[j], float(model.local_coefs[j, k]))
                      for j in range(model.p) if model.local_coefs[j, k] != 0.0)
        if coefs:
            nonzero.append((model.patient_ids[k], coefs))
    note = "all local masses are zero; nothing to flag" if not s.any() else ""
    return OutlierReport(local_mass=s, threshold=threshold, percentile=percentile,
                         flagged_patient_ids=flagged, nonzero_local=tuple(nonzero),
                         note=note)


@dataclass(frozen=True)
class DirtyModel:
    """Decomposition beta^k = B_k + S_k with a row-wise l_{1,inf} penalty on B
    and an elementwise l_{1,1} penalty on S; unnormalized squared loss."""

    B: np.ndarray                 # (p, kappa)
    S: np.ndarray                 # (p, kappa)
    lambda_b: float
    lambda_s: float
    objective: float
    iterations: int
    converged: bool

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        S = np.asarray(self.S, dtype=float)
        if B.shape != S.shape or B.ndim != 2:
            raise ValueError("B and S must share a (p, kappa) shape")
        if not (np.isfinite(B).all() and np.isfinite(S).all()):
            raise ValueError("dirty model coefficients must be finite")

    @property
    def kappa(self) -> int:
        return self.B.shape[1]

    def patient_coefficients(self, k: int) -> np.ndarray:
        return self.B[:, k] + self.S[:, k]


def prox_linf_row(row: np.ndarray, t: float) -> np.ndarray:
    """Proximal operator of t*||.||_inf (Moreau identity with the l1 ball)."""
    if t < 0:
        raise ValueError("step must be >= 0")
    return _kernels.prox_linf(np.ascontiguousarray(row, dtype=float), float(t))


def _lipschitz_estimate(dataset: MultiTaskDataset) -> float:
    # the joint (B_k, S_k) Hessian per patient is 2*[[G, G], [G, G]],
    # largest eigenvalue 4*sigma_max(X^k)^2
    worst = 0.0
    for block in dataset.blocks:
        worst = max(worst, float(np.linalg.norm(block.design, 2)) ** 2)
    return 4.0 * worst


def solve_dirty_model(dataset: MultiTaskDataset, lambda_b: float, lambda_s: float,
                      tolerance: float = 1e-9, max_iterations: int = 50_000,
                      init: tuple[np.ndarray, np.ndarray] | None = None) -> DirtyModel:
    """Proximal gradient on the unnormalized dirty objective with backtracking."""
    if lambda_b < 0 or lambda_s < 0:
        raise ValueError("penalties must be >= 0")
    X = np.ascontiguousarray(np.vstack([b.design for b in dataset.blocks]))
    y = np.ascontiguousarray(np.concatenate([b.targets for b in dataset.blocks]))
    offsets = np.zeros(dataset.kappa + 1, dtype=np.int64)
    np.cumsum(dataset.n_per_patient, out=offsets[1:])
    if init is not None:
        B = np.array(init[0], dtype=float)
        S = np.array(init[1], dtype=float)
        if B.shape != (dataset.p, dataset.kappa) or S.shape != B.shape:
            raise ValueError("init shapes do not match dataset")
    else:
        B = np.zeros((dataset.p, dataset.kappa))
        S = np.zeros((dataset.p, dataset.kappa))
    step0 = 1.0 / max(_lipschitz_estimate(dataset), 1e-12)
    obj, iters, converged = _kernels.dirty_prox_gradient(
        X, y, offsets, float(lambda_b), float(lambda_s), B, S,
        step0, tolerance, max_iterations)
    if not (np.isfinite(B).all() and np.isfinite(S).all() and np.isfinite(obj)):
        raise NumericalError("dirty model solver produced non-finite values")
    return DirtyModel(B=B, S=S, lambda_b=float(lambda_b), lambda_s=float(lambda_s),
                      objective=float(obj), iterations=int(iters),
                      converged=bool(converged))


def dirty_mse(model: DirtyModel, testset: MultiTaskDataset) -> float:
    if testset.kappa != model.kappa:
        raise ValueError("test set patient count does not match model")
    sse = 0.0
    rows = 0
    for k, block in enumerate(testset.blocks):
        r = block.targets - block.design @ model.patient_coefficients(k)
        sse += float(r @ r)
        rows += block.n_rows
    return sse / rows


# ---------------------------------------------------------------------------
# baseline selection (unnormalized loss throughout, matching the benchmark)

def fit_pooled_lasso(dataset: MultiTaskDataset, lam: float,
                     tolerance: float = 1e-9,
                     warm_start: np.ndarray | None = None):
    """One conventionally scaled lasso over all rows; patient identity is
    ignored. The loss is (1/2N)||y - Xb||^2, the usual per-observation scale,
    so penalty values live on the standard lasso scale."""
    X = np.vstack([b.design for b in dataset.blocks])
    y = np.concatenate([b.targets for b in dataset.blocks])
    problem = LassoProblem(X, y, np.full(dataset.p, float(lam)),
                           loss_scale=0.5 / X.shape[0])
    return solve_weighted_lasso(problem, tolerance=tolerance, warm_start=warm_start)


def cv_pooled_lasso(dataset: MultiTaskDataset, lambda_values=None,
                    n_folds: int = 10, seed: int = 0, tolerance: float = 1e-7):
    """1-D CV for the pooled lasso; ties prefer the larger penalty.

    The default grid uses the shared positive grid values (a conventionally
    scaled lasso has no meaningful fit at lambda = 0 beyond plain least
    squares).
    """
    if lambda_values is None:
        lambda_values = tuple(float(v) for v in range(5, 101, 5))
    folds = stratified_folds(dataset, n_folds, seed=seed)
    lams = sorted(lambda_values, reverse=True)
    warm = [None] * n_folds
    table = []
    for lam in lams:
        sse = 0.0
        rows = 0
        for fi, (train, valid) in enumerate(folds):
            sol = fit_pooled_lasso(train, lam, tolerance=tolerance, warm_start=warm[fi])
            warm[fi] = sol.coefficients
            for block in valid.blocks:
                r = block.targets - block.design @ sol.coefficients
                sse += float(r @ r)
                rows += block.n_rows
        table.append((lam, sse / rows))
    best = min(table, key=lambda t: (t[1], -t[0]))
    sol = fit_pooled_lasso(dataset, best[0], tolerance=1e-9)
    return best[0], sol, table


def cv_dirty_model(dataset: MultiTaskDataset, grid: CvGrid | None = None,
                   n_folds: int = 10, seed: int = 0,
                   tolerance: float = 1e-6,
                   final_tolerance: float = 1e-9) -> tuple[DirtyModel, tuple]:
    """Grid CV for (lambda_B, lambda_S) under the same protocol as the main
    estimator, constrained to lambda_B <= lambda_S."""
    if grid is None:
        grid = CvGrid()
    folds = stratified_folds(dataset, n_folds, seed=seed)
    warm: list[tuple | None] = [None] * n_folds
    table = []
    for lb, ls in grid.cells():
        sse = 0.0
        rows = 0
        failed = 0
        for fi, (train, valid) in enumerate(folds):
            try:
                m = solve_dirty_model(train, lb, ls, tolerance=tolerance,
                                      init=warm[fi])
                warm[fi] = (m.B.copy(), m.S.copy())
            except Exception as exc:  # noqa: BLE001
                warnings.warn(f"dirty CV fold {fi} failed at ({lb}, {ls}): {exc}",
                              RuntimeWarning, stacklevel=2)
                failed += 1
                continue
            index = {pid: k for k, pid in enumerate(train.patient_ids)}
            for block in valid.blocks:
                r = block.targets - block.design @ m.patient_coefficients(index[block.patient_id])
                sse += float(r @ r)
                rows += block.n_rows
        score = sse / rows if (rows and failed == 0) else float("inf")
        table.append((lb, ls, score, failed))
    best = select_from_table(table)
    model = solve_dirty_model(dataset, best[0], best[1], tolerance=final_tolerance)
    return model, tuple(table)


# ---------------------------------------------------------------------------
# benchmark harness

@dataclass(frozen=True)
class BenchmarkConfig:
    p: int = 16
    kappa: int = 16
    n: int = 64
    trials: int = 20
    seed: int = 0
    n_test: int = 1000
    n_folds: int = 10
    grid: CvGrid = field(default_factory=CvGrid)
    cv_tolerance: float = 1e-6
    fit_tolerance: float = 1e-9


@dataclass(frozen=True)
class BenchmarkReport:
    config: BenchmarkConfig
    methods: tuple
    per_trial_mse: dict        # method -> list of floats
    chosen_penalties: dict     # method -> list
    mean_mse: dict
    sd_mse: dict
    t_tests: dict              # (a, b) -> (statistic, p_value)
    notes: tuple = ()

    def to_dict(self) -> dict:
        return {"config": {"p": self.config.p, "kappa": self.config.kappa,
                           "n": self.config.n, "trials": self.config.trials,
                           "seed": self.config.seed, "n_test": self.config.n_test,
                           "n_folds": self.config.n_folds,
                           "loss_scaling": UNNORMALIZED},
                "methods": list(self.methods),
                "per_trial_mse": self.per_trial_mse,
                "chosen_penalties": self.chosen_penalties,
                "mean_mse": self.mean_mse,
                "sd_mse": self.sd_mse,
                "t_tests": {f"{a}_vs_{b}": {"statistic": s, "p_value": p}
                            for (a, b), (s, p) in self.t_tests.items()},
                "notes": list(self.notes)}


def _run_single_trial(config: BenchmarkConfig, methods, trial: int):
    trial_seed = config.seed + 1000 * trial
    train, pop = generate_tau_population(config.p, config.kappa, config.n,
                                         seed=trial_seed)
    test = holdout_testset(pop, config.n_test, seed=trial_seed + 1)
    out_mse = {}
    out_pen = {}
    notes = []
    if "glop" in methods:
        from .selection import cv_grid_search
        res = cv_grid_search(train, grid=config.grid, n_folds=config.n_folds,
                             seed=trial_seed, loss_scaling=UNNORMALIZED,
                             tolerance=config.cv_tolerance,
                             final_tolerance=config.fit_tolerance)
        out_mse["glop"] = evaluate_mse(res.model, test)
        out_pen["glop"] = (res.penalty.lambda_g, res.penalty.lambda_l)
    if "dirty" in methods:
        model, table = cv_dirty_model(train, grid=config.grid,
                                      n_folds=config.n_folds, seed=trial_seed,
                                      tolerance=config.cv_tolerance,
                                      final_tolerance=config.fit_tolerance)
        out_mse["dirty"] = dirty_mse(model, test)
        out_pen["dirty"] = (model.lambda_b, model.lambda_s)
        both_active = np.count_nonzero(model.B) > 0 and np.count_nonzero(model.S) > 0
        if not both_active:
            notes.append(f"trial {trial}: dirty model fit left one of B, S all-zero")
    if "lasso" in methods:
        lam, sol, _ = cv_pooled_lasso(train, n_folds=config.n_folds,
                                      seed=trial_seed, tolerance=config.cv_tolerance)
        sse = 0.0
        rows = 0
        for block in test.blocks:
            r = block.targets - block.design @ sol.coefficients
            sse += float(r @ r)
            rows += block.n_rows
        out_mse["lasso"] = sse / rows
        out_pen["lasso"] = (lam,)
    return out_mse, out_pen, notes


def run_table1_benchmark(config: BenchmarkConfig,
                         methods=("glop", "dirty", "lasso"),
                         threads: int = 1) -> BenchmarkReport:
    """Per trial: simulate, select penalties by CV, fit each method, score on a
    fresh holdout; aggregate with an independent two-sample t-test."""
    methods = tuple(m for m in ("glop", "dirty", "lasso") if m in methods)
    if not methods:
        raise ValueError("need at least one method")
    if config.trials < 2:
        raise ValueError("need at least 2 trials for dispersion estimates")
    if threads > 1:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=threads, backend="loky")(
            delayed(_run_single_trial)(config, methods, t)
            for t in range(config.trials))
    else:
        results = [_run_single_trial(config, methods, t)
                   for t in range(config.trials)]
    per_trial = {m: [r[0][m] for r in results] for m in methods}
    penalties = {m: [r[1][m] for r in results] for m in methods}
    notes = tuple(note for r in results for note in r[2])
    means = {m: float(np.mean(per_trial[m])) for m in methods}
    sds = {m: float(np.std(per_trial[m], ddof=1)) for m in methods}
    tt = {}
    for i, a in enumerate(methods):
        for b in methods[i + 1:]:
            s, p = stats.ttest_ind(per_trial[a], per_trial[b])
            tt[(a, b)] = (float(s), float(p))
    return BenchmarkReport(config=config, methods=methods,
                           per_trial_mse=per_trial, chosen_penalties=penalties,
                           mean_mse=means, sd_mse=sds, t_tests=tt, notes=notes)


def export_benchmark_csv(report: BenchmarkReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["p", "kappa", "n", "method", "mean_mse", "sd_mse"])
        for m in report.methods:
            writer.writerow([report.config.p, report.config.kappa, report.config.n,
                             m, format(report.mean_mse[m], ".6g"),
                             format(report.sd_mse[m], ".6g")])


def export_benchmark_json(report: BenchmarkReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
