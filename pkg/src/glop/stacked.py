"""Single-lasso view: block design with penalties absorbed into column scalings.

Requires equal per-patient sample counts; unequal counts need extra
normalization that is not defined here, so those datasets must use the
block-coordinate solver instead.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bcm import (PER_PATIENT_HALF_N, GlopModel, GlopPenalty, objective_from_coefs)
from .data import MultiTaskDataset
from .lasso import DEFAULT_MAX_ITERATIONS, LassoProblem, solve_weighted_lasso

GLOBAL = "global"
LOCAL = "local"


@dataclass(frozen=True)
class StackedDesign:
    matrix: np.ndarray               # (sum n_k, p*(kappa+1))
    response: np.ndarray             # (sum n_k,)
    column_map: tuple[tuple, ...]    # (role, patient index or None, feature index)
    reference_lambdas: tuple[float, float]
    p: int
    kappa: int

    @property
    def m(self) -> int:
        return self.matrix.shape[1]


def build_stacked_design(dataset: MultiTaskDataset, lambda_g: float,
                         lambda_l: float) -> StackedDesign:
    """First p columns: stacked designs / lambda_g; then per-patient diagonal
    blocks / lambda_l."""
    if not (lambda_g > 0 and lambda_l > 0):
        raise ValueError("stacked construction requires lambda_g > 0 and lambda_l > 0")
    ns = set(dataset.n_per_patient)
    if len(ns) != 1:
        raise ValueError(
            "stacked construction requires equal rows per patient; "
            "use the block-coordinate solver for unequal block sizes")
    p, kappa = dataset.p, dataset.kappa
    n = dataset.n_per_patient[0]
    total = n * kappa
    M = np.zeros((total, p * (kappa + 1)))
    y = np.concatenate([b.targets for b in dataset.blocks])
    cmap = []
    for j in range(p):
        cmap.append((GLOBAL, None, j))
    for k, block in enumerate(dataset.blocks):
        M[k * n:(k + 1) * n, :p] = block.design / lambda_g
        M[k * n:(k + 1) * n, p * (k + 1):p * (k + 2)] = block.design / lambda_l
        for j in range(p):
            cmap.append((LOCAL, k, j))
    return StackedDesign(matrix=M, response=y, column_map=tuple(cmap),
                         reference_lambdas=(float(lambda_g), float(lambda_l)),
                         p=p, kappa=kappa)


def column_weight(design: StackedDesign, i: int) -> float:
    """The penalty absorbed into column i (lambda_g or lambda_l)."""
    role = design.column_map[i][0]
    return design.reference_lambdas[0] if role == GLOBAL else design.reference_lambdas[1]


def unstack_coefficients(design: StackedDesign, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map scaled-basis coefficients back to (g, L) by dividing per column."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (design.m,):
        raise ValueError("coefficient length does not match stacked design")
    lam_g, lam_l = design.reference_lambdas
    g = xi[:design.p] / lam_g
    L = np.empty((design.p, design.kappa))
    for k in range(design.kappa):
        L[:, k] = xi[design.p * (k + 1):design.p * (k + 2)] / lam_l
    return g, L


def stack_coefficients(design: StackedDesign, g: np.ndarray, L: np.ndarray) -> np.ndarray:
    """Inverse of :func:`unstack_coefficients`."""
    lam_g, lam_l = design.reference_lambdas
    parts = [np.asarray(g) * lam_g]
    for k in range(design.kappa):
        parts.append(np.asarray(L)[:, k] * lam_l)
    return np.concatenate(parts)


def stacked_loss_scale(dataset: MultiTaskDataset, loss_scaling: str) -> float:
    if loss_scaling == PER_PATIENT_HALF_N:
        return 1.0 / (2.0 * dataset.n_per_patient[0])
    return 1.0


def solve_glop_single_lasso(dataset: MultiTaskDataset, penalty: GlopPenalty,
                            tolerance: float = 1e-10,
                            max_iterations: int = DEFAULT_MAX_ITERATIONS) -> GlopModel:
    """Solve the whole problem as one unit-penalty lasso on the scaled design."""
    design = build_stacked_design(dataset, penalty.lambda_g, penalty.lambda_l)
    problem = LassoProblem(design.matrix, design.response,
                           np.ones(design.m),
                           loss_scale=stacked_loss_scale(dataset, penalty.loss_scaling))
    sol = solve_weighted_lasso(problem, tolerance=tolerance, max_iterations=max_iterations)
    g, L = unstack_coefficients(design, sol.coefficients)
    objective = objective_from_coefs(dataset, g, L, penalty)
    return GlopModel(global_coefs=g, local_coefs=L, penalty=penalty,
                     objective=objective, sweeps=sol.iterations,
                     converged=sol.converged,
                     feature_names=dataset.feature_names,
                     patient_ids=dataset.patient_ids,
                     max_kkt_violation=sol.max_kkt_violation)
