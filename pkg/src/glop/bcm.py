"""Global+local estimator via block coordinate minimization.

The objective is

    sum_k scale_k ||y^k - X^k (g + L_k)||^2 + lambda_g ||g||_1 + lambda_l ||L||_{1,1}

with scale_k = 1/(2 n_k) ("per_patient_half_n") or 1 ("unnormalized").
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import MultiTaskDataset, PatientBlock
from .errors import NumericalError

PER_PATIENT_HALF_N = "per_patient_half_n"
UNNORMALIZED = "unnormalized"
LOSS_SCALINGS = (PER_PATIENT_HALF_N, UNNORMALIZED)

DEFAULT_TOLERANCE = 1e-9
DEFAULT_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class GlopPenalty:
    lambda_g: float
    lambda_l: float
    loss_scaling: str = PER_PATIENT_HALF_N

    def __post_init__(self):
        if not (np.isfinite(self.lambda_g) and self.lambda_g >= 0):
            raise ValueError("lambda_g must be finite and >= 0")
        if not (np.isfinite(self.lambda_l) and self.lambda_l >= 0):
            raise ValueError("lambda_l must be finite and >= 0")
        if self.loss_scaling not in LOSS_SCALINGS:
            raise ValueError(f"loss_scaling must be one of {LOSS_SCALINGS}")

    def scales(self, n_per_patient) -> np.ndarray:
        ns = np.asarray(n_per_patient, dtype=float)
        if self.loss_scaling == PER_PATIENT_HALF_N:
            return 1.0 / (2.0 * ns)
        return np.ones_like(ns)


@dataclass(frozen=True)
class GlopModel:
    global_coefs: np.ndarray   # (p,)
    local_coefs: np.ndarray    # (p, kappa)
    penalty: GlopPenalty
    objective: float
    sweeps: int
    converged: bool
    feature_names: tuple[str, ...]
    patient_ids: tuple[str, ...]
    max_kkt_violation: float = float("nan")

    def __post_init__(self):
        g = np.asarray(self.global_coefs, dtype=float)
        L = np.asarray(self.local_coefs, dtype=float)
        if g.ndim != 1 or L.ndim != 2 or L.shape[0] != g.shape[0]:
            raise ValueError("global/local coefficient shapes inconsistent")
        if not (np.isfinite(g).all() and np.isfinite(L).all()):
            raise ValueError("model coefficients must be finite")
        g.setflags(write=False)
        L.setflags(write=False)
        object.__setattr__(self, "global_coefs", g)
        object.__setattr__(self, "local_coefs", L)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "patient_ids", tuple(self.patient_ids))

    @property
    def p(self) -> int:
        return self.global_coefs.shape[0]

    @property
    def kappa(self) -> int:
        return self.local_coefs.shape[1]

    def patient_coefficients(self, k: int) -> np.ndarray:
        return self.global_coefs + self.local_coefs[:, k]


def _stack(dataset: MultiTaskDataset):
    X = np.ascontiguousarray(np.vstack([b.design for b in dataset.blocks]))
    y = np.ascontiguousarray(np.concatenate([b.targets for b in dataset.blocks]))
    offsets = np.zeros(dataset.kappa + 1, dtype=np.int64)
    np.cumsum(dataset.n_per_patient, out=offsets[1:])
    return X, y, offsets


def _penalty_masks(dataset: MultiTaskDataset, unpenalized_intercept: bool):
    wg = np.ones(dataset.p)
    wl = np.ones(dataset.p)
    if unpenalized_intercept:
        idx = dataset.intercept_index
        if idx is None:
            raise ValueError("unpenalized_intercept requires an intercept column")
        wg[idx] = 0.0
        wl[idx] = 0.0
    return wg, wl


def glop_objective(dataset: MultiTaskDataset, model: GlopModel) -> float:
    """Recompute the penalized objective from scratch."""
    return objective_from_coefs(dataset, model.global_coefs, model.local_coefs,
                                model.penalty)


def objective_from_coefs(dataset: MultiTaskDataset, g: np.ndarray, L: np.ndarray,
                         penalty: GlopPenalty, unpenalized_intercept: bool = False) -> float:
    g = np.asarray(g, dtype=float)
    L = np.asarray(L, dtype=float)
    if g.shape != (dataset.p,) or L.shape != (dataset.p, dataset.kappa):
        raise ValueError("coefficient shapes do not match dataset")
    X, y, offsets = _stack(dataset)
    scales = penalty.scales(dataset.n_per_patient)
    wg, wl = _penalty_masks(dataset, unpenalized_intercept)
    return float(_kernels.glop_objective_kernel(
        X, y, offsets, scales, penalty.lambda_g, penalty.lambda_l, wg, wl,
        np.ascontiguousarray(g), np.ascontiguousarray(L)))


def solve_glop_bcm(dataset: MultiTaskDataset, penalty: GlopPenalty,
                   tolerance: float = DEFAULT_TOLERANCE,
                   max_sweeps: int = DEFAULT_MAX_SWEEPS,
                   init: tuple[np.ndarray, np.ndarray] | None = None,
                   unpenalized_intercept: bool = False,
                   inner_tolerance: float | None = None,
                   inner_max_iterations: int = 20_000) -> GlopModel:
    """Fit by alternating the pooled g-lasso and the per-patient L-lassos."""
    if tolerance <= 0:
        raise ValueError("tolerance must be > 0")
    X, y, offsets = _stack(dataset)
    scales = penalty.scales(dataset.n_per_patient)
    wg, wl = _penalty_masks(dataset, unpenalized_intercept)
    if init is not None:
        g = np.array(init[0], dtype=float)
        L = np.array(init[1], dtype=float, order="C")
        if g.shape != (dataset.p,) or L.shape != (dataset.p, dataset.kappa):
            raise ValueError("init shapes do not match dataset")
    else:
        g = np.zeros(dataset.p)
        L = np.zeros((dataset.p, dataset.kappa))
    if inner_tolerance is None:
        inner_tolerance = min(tolerance, 1e-10)
    kkt_threshold = 10.0 * tolerance * max(1.0, _gradient_scale(X, y, offsets, scales))
    obj, sweeps, converged, max_kkt = _kernels.bcm_kernel(
        X, y, offsets, scales, penalty.lambda_g, penalty.lambda_l, wg, wl,
        g, L, tolerance, max_sweeps, inner_tolerance, inner_max_iterations,
        kkt_threshold)
    if not (np.isfinite(g).all() and np.isfinite(L).all() and np.isfinite(obj)):
        raise NumericalError("block coordinate minimization produced non-finite values")
    return GlopModel(global_coefs=g, local_coefs=L, penalty=penalty,
                     objective=float(obj), sweeps=int(sweeps), converged=bool(converged),
                     feature_names=dataset.feature_names,
                     patient_ids=dataset.patient_ids,
                     max_kkt_violation=float(max_kkt))


def _gradient_scale(X, y, offsets, scales) -> float:
    """max_j |gradient of the smooth loss at 0|, used to scale KKT tolerances."""
    worst = 0.0
    for k in range(len(scales)):
        lo, hi = offsets[k], offsets[k + 1]
        worst = max(worst, 2.0 * scales[k] * np.max(np.abs(X[lo:hi].T @ y[lo:hi]), initial=0.0))
    return worst


def predict(model: GlopModel, block: PatientBlock, patient_index: int | None = None) -> np.ndarray:
    """X(g + L_k) for an in-population patient, Xg otherwise (0-based index)."""
    if block.design.shape[1] != model.p:
        raise ValueError("block column count does not match model")
    if patient_index is None:
        return block.design @ model.global_coefs
    if not 0 <= patient_index < model.kappa:
        raise ValueError(f"patient_index {patient_index} out of range 0..{model.kappa - 1}")
    return block.design @ model.patient_coefficients(patient_index)


def evaluate_mse(model: GlopModel, testset: MultiTaskDataset) -> float:
    """Mean squared error over all test rows, in-population predictions."""
    if testset.kappa != model.kappa:
        raise ValueError("test set patient count does not match model")
    sse = 0.0
    total = 0
    for k, block in enumerate(testset.blocks):
        r = block.targets - predict(model, block, k)
        sse += float(r @ r)
        total += block.n_rows
    return sse / total


def model_to_dict(model: GlopModel) -> dict:
    return {
        "feature_names": list(model.feature_names),
        "patient_ids": list(model.patient_ids),
        "g": model.global_coefs.tolist(),
        "L": [model.local_coefs[:, k].tolist() for k in range(model.kappa)],
        "lambda_g": model.penalty.lambda_g,
        "lambda_l": model.penalty.lambda_l,
        "loss_scaling": model.penalty.loss_scaling,
        "objective": model.objective,
        "converged": model.converged,
        "sweeps": model.sweeps,
        "max_kkt_violation": model.max_kkt_violation,
    }


def model_from_dict(doc: dict) -> GlopModel:
    L = np.array(doc["L"], dtype=float).T if doc["L"] else np.zeros((len(doc["g"]), 0))
    return GlopModel(
        global_coefs=np.array(doc["g"], dtype=float),
        local_coefs=L,
        penalty=GlopPenalty(doc["lambda_g"], doc["lambda_l"], doc["loss_scaling"]),
        objective=float(doc["objective"]),
        sweeps=int(doc.get("sweeps", 0)),
        converged=bool(doc["converged"]),
        feature_names=tuple(doc["feature_names"]),
        patient_ids=tuple(doc["patient_ids"]),
        max_kkt_violation=float(doc.get("max_kkt_violation", float("nan"))),
    )


def save_model(model: GlopModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)


def load_model(path) -> GlopModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
