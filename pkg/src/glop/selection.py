"""Penalty selection: cross-validated grid search and BIC scoring.

The default grid is {0, 5, ..., 100}^2 restricted to lambda_g <= lambda_l.
Ties are broken toward sparser models: higher lambda_l first, then higher
lambda_g.
"""
from __future__ import annotations

import csv as _csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bcm import (PER_PATIENT_HALF_N, GlopModel, GlopPenalty, solve_glop_bcm)
from .data import MultiTaskDataset, PatientBlock
from .errors import SelectionError

NEG_INF = float("-inf")


@dataclass(frozen=True)
class CvGrid:
    lambda_g_values: tuple = tuple(float(v) for v in range(0, 101, 5))
    lambda_l_values: tuple = tuple(float(v) for v in range(0, 101, 5))
    require_g_le_l: bool = True

    def cells(self):
        """(lambda_g, lambda_l) pairs, lambda_l-major descending for warm starts."""
        out = []
        for ll in sorted(self.lambda_l_values, reverse=True):
            for lg in sorted(self.lambda_g_values, reverse=True):
                if self.require_g_le_l and lg > ll:
                    continue
                out.append((float(lg), float(ll)))
        return out


@dataclass(frozen=True)
class SelectionResult:
    penalty: GlopPenalty
    score: float
    model: GlopModel
    table: tuple = ()           # (lambda_g, lambda_l, score, n_failed_folds)
    criterion: str = "cv"
    ties_broken: tuple = ()     # (lambda_g, lambda_l) pairs sharing the best score


def stratified_folds(dataset: MultiTaskDataset, n_folds: int, seed: int = 0):
    """Row-index folds drawn within each patient, so every fold sees every
    patient and per-patient counts across folds differ by at most one.

    Returns a list of (train_dataset, valid_dataset) pairs.
    """
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    if dataset.total_rows < n_folds:
        raise ValueError("more folds than rows in the dataset")
    rng = np.random.default_rng(seed)
    assignments = []
    short = []
    coverage = np.zeros(n_folds, dtype=int)
    for block in dataset.blocks:
        n = block.n_rows
        if n < n_folds:
            # too few rows to reach every fold; spread over the folds with the
            # least validation coverage so far (random tie-break)
            short.append(block.patient_id)
            order = np.lexsort((rng.random(n_folds), coverage))
            labels = rng.permutation(order[:n])
        else:
            labels = np.arange(n) % n_folds
            rng.shuffle(labels)
        coverage += np.bincount(labels, minlength=n_folds)
        assignments.append(labels)
    if short:
        warnings.warn(f"patients with fewer rows than folds: {short}; "
                      "some folds get no validation rows from them",
                      RuntimeWarning, stacklevel=2)
    folds = []
    for f in range(n_folds):
        train_blocks, valid_blocks = [], []
        for block, labels in zip(dataset.blocks, assignments):
            mask = labels == f
            if mask.any():
                # a short patient contributes no validation rows to some folds
                valid_blocks.append(PatientBlock(block.patient_id,
                                                 block.design[mask],
                                                 block.targets[mask]))
            train_blocks.append(PatientBlock(block.patient_id,
                                             block.design[~mask],
                                             block.targets[~mask]))
        folds.append((MultiTaskDataset(tuple(train_blocks), dataset.feature_names),
                      MultiTaskDataset(tuple(valid_blocks), dataset.feature_names)))
    return folds


def _validation_sse(model: GlopModel, valid: MultiTaskDataset):
    # match by patient id: short patients may be absent from a fold
    index = {pid: k for k, pid in enumerate(model.patient_ids)}
    sse = 0.0
    rows = 0
    for block in valid.blocks:
        k = index[block.patient_id]
        r = block.targets - block.design @ model.patient_coefficients(k)
        sse += float(r @ r)
        rows += block.n_rows
    return sse, rows


def select_from_table(table) -> tuple:
    """Pick (lambda_g, lambda_l) with the smallest score; ties prefer larger
    lambda_l, then larger lambda_g. Rows are (lambda_g, lambda_l, score, ...)."""
    usable = [row for row in table if np.isfinite(row[2])]
    if not usable:
        raise SelectionError("no grid cell produced a finite score")
    return min(usable, key=lambda r: (r[2], -r[1], -r[0]))


def cv_grid_search(dataset: MultiTaskDataset, grid: CvGrid | None = None,
                   n_folds: int = 5, seed: int = 0,
                   loss_scaling: str = PER_PATIENT_HALF_N,
                   tolerance: float = 1e-7,
                   final_tolerance: float = 1e-9,
                   unpenalized_intercept: bool = False) -> SelectionResult:
    """Mean validation MSE over stratified folds for every grid cell, refit on
    the full data at the winner."""
    if grid is None:
        grid = CvGrid()
    folds = stratified_folds(dataset, n_folds, seed=seed)
    cells = grid.cells()
    # warm-start state per fold, carried along the heavily-penalized-first order
    warm: list[tuple | None] = [None] * n_folds
    table = []
    for lg, ll in cells:
        penalty = GlopPenalty(lg, ll, loss_scaling)
        sse = 0.0
        rows = 0
        failed = 0
        for fi, (train, valid) in enumerate(folds):
            try:
                model = solve_glop_bcm(train, penalty, tolerance=tolerance,
                                       init=warm[fi],
                                       unpenalized_intercept=unpenalized_intercept)
                warm[fi] = (model.global_coefs.copy(), model.local_coefs.copy())
            except Exception as exc:  # noqa: BLE001 - a cell may fail, the grid survives
                warnings.warn(f"fold {fi} failed at ({lg}, {ll}): {exc}",
                              RuntimeWarning, stacklevel=2)
                failed += 1
                continue
            s, r = _validation_sse(model, valid)
            sse += s
            rows += r
        score = sse / rows if rows else float("inf")
        table.append((lg, ll, score if failed == 0 else float("inf"), failed))
    best = select_from_table(table)
    ties = tuple((r[0], r[1]) for r in table if r[2] == best[2])
    penalty = GlopPenalty(best[0], best[1], loss_scaling)
    model = solve_glop_bcm(dataset, penalty, tolerance=final_tolerance,
                           unpenalized_intercept=unpenalized_intercept)
    return SelectionResult(penalty=penalty, score=best[2], model=model,
                           table=tuple(table), criterion="cv",
                           ties_broken=ties if len(ties) > 1 else ())


def degrees_of_freedom(model: GlopModel) -> int:
    """Count of nonzero coefficients across g and L."""
    return int(np.count_nonzero(model.global_coefs)
               + np.count_nonzero(model.local_coefs))


def bic_score(dataset: MultiTaskDataset, model: GlopModel) -> float:
    """N*ln(RSS/N) + df*ln(N). A perfect fit (RSS = 0) scores -inf."""
    rss = 0.0
    for k, block in enumerate(dataset.blocks):
        r = block.targets - block.design @ model.patient_coefficients(k)
        rss += float(r @ r)
    N = dataset.total_rows
    if rss <= 0.0:
        warnings.warn("zero residual sum of squares; BIC is -inf",
                      RuntimeWarning, stacklevel=2)
        return NEG_INF
    return N * np.log(rss / N) + degrees_of_freedom(model) * np.log(N)


def bic_grid_select(dataset: MultiTaskDataset, grid: CvGrid | None = None,
                    loss_scaling: str = PER_PATIENT_HALF_N,
                    tolerance: float = 1e-8,
                    unpenalized_intercept: bool = False) -> SelectionResult:
    """Fit every grid cell on the full data and keep the best BIC."""
    if grid is None:
        grid = CvGrid()
    table = []
    models = {}
    warm = None
    for lg, ll in grid.cells():
        penalty = GlopPenalty(lg, ll, loss_scaling)
        try:
            model = solve_glop_bcm(dataset, penalty, tolerance=tolerance,
                                   init=warm,
                                   unpenalized_intercept=unpenalized_intercept)
            warm = (model.global_coefs.copy(), model.local_coefs.copy())
        except Exception as exc:  # noqa: BLE001
            warnings.warn(f"cell ({lg}, {ll}) failed: {exc}",
                          RuntimeWarning, stacklevel=2)
            table.append((lg, ll, float("inf"), 1))
            continue
        score = bic_score(dataset, model)
        models[(lg, ll)] = model
        table.append((lg, ll, score, 0))
    finite = [row for row in table if row[2] != float("inf")]
    if not finite:
        raise SelectionError("no grid cell produced a BIC score")
    best = min(finite, key=lambda r: (r[2], -r[1], -r[0]))
    ties = tuple((r[0], r[1]) for r in finite if r[2] == best[2])
    penalty = GlopPenalty(best[0], best[1], loss_scaling)
    return SelectionResult(penalty=penalty, score=best[2],
                           model=models[(best[0], best[1])],
                           table=tuple(table), criterion="bic",
                           ties_broken=ties if len(ties) > 1 else ())


def export_score_table_csv(result: SelectionResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["lambda_g", "lambda_l", "score", "n_failed_folds"])
        for lg, ll, score, failed in result.table:
            writer.writerow([format(lg, "g"), format(ll, "g"),
                             format(score, ".17g"), failed])
