"""Uniqueness certification: equicorrelation set, rank check, sign-flip affine
dependence search, and the penalty-ratio certificate.

A matrix is "affinely independent with negation" (AIN) when no column equals
a signed affine combination of the others (signs in {-1, +1}, weights summing
to 1). The brute-force search enumerates every sign pattern per candidate
column, so it is exact at small sizes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .bcm import GlopPenalty
from .data import MultiTaskDataset
from .errors import CapacityError
from .lasso import LassoProblem, kkt_residuals

UNIQUE_BY_THEOREM1 = "unique_by_theorem1"
UNIQUE_BY_ACTIVE_RANK = "unique_by_active_rank"
INCONCLUSIVE = "inconclusive"
NOT_AIN_WITNESS_FOUND = "not_ain_witness_found"
AIN = "ain"

RANK_EPS = 1e-10
MAX_AIN_COLUMNS = 16


@dataclass(frozen=True)
class EquicorrelationSet:
    indices: np.ndarray          # sorted column indices
    subgradient_signs: np.ndarray  # implied subgradient value per index

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=int))
        object.__setattr__(self, "subgradient_signs",
                           np.asarray(self.subgradient_signs, dtype=float))

    @property
    def size(self) -> int:
        return self.indices.size


@dataclass(frozen=True)
class AinWitness:
    """A signed affine combination reproducing column ``column``."""

    column: int
    signs: np.ndarray    # over the other columns, original ordering
    weights: np.ndarray
    other_columns: np.ndarray
    residual: float

    def to_dict(self) -> dict:
        return {"column": int(self.column),
                "other_columns": self.other_columns.tolist(),
                "signs": self.signs.tolist(),
                "weights": self.weights.tolist(),
                "residual": self.residual}


@dataclass(frozen=True)
class UniquenessCertificate:
    verdict: str
    witness: AinWitness | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict,
                "witness": self.witness.to_dict() if self.witness else None,
                "details": self.details}


def equicorrelation_set(problem: LassoProblem, solution: np.ndarray,
                        tolerance: float = 1e-8) -> EquicorrelationSet:
    """Columns whose implied subgradient magnitude is (within tolerance) 1.

    Requires the supplied solution to satisfy first-order optimality within
    the same tolerance.
    """
    beta = np.asarray(solution, dtype=float)
    viol = kkt_residuals(problem, beta)
    scale = max(1.0, float(np.max(problem.penalty_weights, initial=0.0)))
    worst = float(viol.max(initial=0.0))
    if worst > tolerance * scale:
        raise ValueError(
            f"solution is not optimal: max KKT violation {worst:.3e} exceeds "
            f"{tolerance * scale:.3e}")
    grad = 2.0 * problem.loss_scale * (problem.design.T @ (problem.response - problem.design @ beta))
    w = problem.penalty_weights
    alphas = np.zeros(problem.m)
    in_set = np.zeros(problem.m, dtype=bool)
    for i in range(problem.m):
        if w[i] > 0:
            alphas[i] = grad[i] / w[i]
            in_set[i] = abs(alphas[i]) >= 1.0 - tolerance * scale / w[i]
        else:
            # unpenalized coordinate behaves like an always-active column
            alphas[i] = np.sign(beta[i])
            in_set[i] = True
    idx = np.flatnonzero(in_set)
    return EquicorrelationSet(indices=idx, subgradient_signs=alphas[idx])


def active_rank_check(design: np.ndarray, eset: EquicorrelationSet) -> UniquenessCertificate:
    """Full column rank of the equicorrelation submatrix certifies uniqueness."""
    design = np.asarray(design, dtype=float)
    if eset.size == 0:
        return UniquenessCertificate(UNIQUE_BY_ACTIVE_RANK,
                                     details={"note": "empty equicorrelation set"})
    if eset.indices.max() >= design.shape[1]:
        raise ValueError("equicorrelation indices out of range for design")
    sub = design[:, eset.indices]
    sv = np.linalg.svd(sub, compute_uv=False)
    full = sv.size == min(sub.shape) and sv[-1] > RANK_EPS * sv[0] and sub.shape[0] >= sub.shape[1]
    details = {"rank_threshold": RANK_EPS,
               "smallest_singular_value": float(sv[-1]),
               "largest_singular_value": float(sv[0]),
               "columns": int(sub.shape[1])}
    if full:
        return UniquenessCertificate(UNIQUE_BY_ACTIVE_RANK, details=details)
    return UniquenessCertificate(INCONCLUSIVE, details={**details, "failed": "active submatrix rank-deficient"})


@lru_cache(maxsize=8)
def _sign_matrix(q: int) -> np.ndarray:
    """All 2^q sign patterns; bit i of the row index gives column i's sign
    (0 -> +1), so row order is the deterministic enumeration order."""
    pats = np.arange(2 ** q, dtype=np.uint32)
    bits = (pats[:, None] >> np.arange(q, dtype=np.uint32)) & 1
    return 1.0 - 2.0 * bits.astype(float)


def check_ain_bruteforce(matrix: np.ndarray, tolerance: float = 1e-8) -> UniquenessCertificate:
    """Exhaustive signed-affine-dependence search over all columns and patterns.

    Per candidate column j and sign pattern, the consistency of
    [signed other columns; row of ones] w = [column j; 1] is judged by its
    least-squares residual against tolerance*(1 + ||column j||). The first
    hit in (column, pattern) order is returned as a witness.
    """
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2:
        raise ValueError("matrix must be 2-D")
    n, m = M.shape
    if m > MAX_AIN_COLUMNS:
        raise CapacityError(
            f"brute-force search limited to {MAX_AIN_COLUMNS} columns, got {m}; "
            "use the penalty-ratio certificate instead")
    if m < 2:
        return UniquenessCertificate(AIN, details={"columns": m})
    for j in range(m):
        others = np.array([i for i in range(m) if i != j], dtype=int)
        b = M[:, j]
        thr = tolerance * (1.0 + np.linalg.norm(b))
        A = M[:, others]
        # One SVD per column replaces per-pattern least squares: the joint
        # residual decomposes into the fixed column-space misfit plus a
        # rank-one term from the sum-to-one row.
        U, sing, Vt = np.linalg.svd(A, full_matrices=True)
        rank = int(np.sum(sing > max(n, m) * np.finfo(float).eps * (sing[0] if sing.size else 0.0)))
        Ur = U[:, :rank]
        resid0_vec = b - Ur @ (Ur.T @ b)
        resid0_sq = float(resid0_vec @ resid0_vec)
        if resid0_sq > thr * thr:
            continue
        q = m - 1
        Vr = Vt[:rank].T                       # (q, rank)
        u0 = Vr @ ((Ur.T @ b) / sing[:rank])   # min-norm solution of A u = b
        Nb = Vt[rank:].T                       # null-space basis (q, q-rank)
        E = _sign_matrix(q)                    # (2^q, q), witness u maps to w = sign*u
        null_comp = np.abs(E @ Nb).max(axis=1) if Nb.shape[1] else np.zeros(E.shape[0])
        dots = E @ u0
        H = E @ (Vr / sing[:rank])             # rows: Sigma^{-1} V^T eps
        hnorm_sq = np.einsum("ij,ij->i", H, H)
        extra_sq = (1.0 - dots) ** 2 / (1.0 + hnorm_sq)
        res_sq = np.where(null_comp > 1e-12, resid0_sq, resid0_sq + extra_sq)
        hits = np.flatnonzero(res_sq <= thr * thr)
        if hits.size == 0:
            continue
        pat = int(hits[0])
        eps = E[pat]
        if null_comp[pat] > 1e-12:
            # pick the exact null-space adjustment achieving sum-to-one
            ne = Nb.T @ eps
            z = (1.0 - eps @ u0) / (ne @ ne) * ne
            u = u0 + Nb @ z
        else:
            # no null-space freedom: least squares on the augmented system
            Afull = np.vstack([A * eps, np.ones(q)])
            bfull = np.concatenate([b, [1.0]])
            w_ls, *_ = np.linalg.lstsq(Afull, bfull, rcond=None)
            u = eps * w_ls
        w = eps * u
        resid = float(np.linalg.norm(A @ u - b) ** 2 + (eps @ u - 1.0) ** 2) ** 0.5
        witness = AinWitness(column=j, signs=eps.copy(), weights=w,
                             other_columns=others, residual=resid)
        return UniquenessCertificate(NOT_AIN_WITNESS_FOUND, witness=witness,
                                     details={"pattern_index": pat, "columns": m})
    return UniquenessCertificate(AIN, details={"columns": m, "exhaustive": True})


def is_ain(matrix: np.ndarray, tolerance: float = 1e-8) -> bool:
    return check_ain_bruteforce(matrix, tolerance).verdict == AIN


def theorem1_certificate(dataset: MultiTaskDataset, penalty: GlopPenalty,
                         per_patient_ain: str = "brute_force",
                         ain_tolerance: float = 1e-8) -> UniquenessCertificate:
    """Certify uniqueness from per-patient designs and the penalty ratio.

    Sufficient conditions: every patient design AIN, and either
    lambda_l > lambda_g, or (even patient count) lambda_l/lambda_g > 1/2.
    """
    if per_patient_ain not in ("brute_force", "assume_continuous"):
        raise ValueError("per_patient_ain must be 'brute_force' or 'assume_continuous'")
    if not (penalty.lambda_g > 0 and penalty.lambda_l > 0):
        raise ValueError("certificate requires strictly positive penalties")
    ratio = penalty.lambda_l / penalty.lambda_g
    kappa = dataset.kappa
    details: dict = {"lambda_ratio": ratio, "kappa": kappa}

    if penalty.lambda_l > penalty.lambda_g:
        details["ratio_condition"] = "lambda_l > lambda_g"
        ratio_ok = True
    elif kappa % 2 == 0 and ratio > 0.5:
        details["ratio_condition"] = "even kappa with lambda_l/lambda_g > 1/2"
        ratio_ok = True
    else:
        ratio_ok = False
        achievable = [k for k in range(kappa + 1)
                      if abs((kappa - 2 * k) * ratio - 1.0) <= 1e-12]
        details["failed"] = "penalty ratio condition"
        details["ratio_condition"] = "none satisfied"
        if achievable:
            details["achievable_negations"] = achievable

    witness = None
    if per_patient_ain == "brute_force" and dataset.p <= MAX_AIN_COLUMNS:
        details["ain_mode"] = "brute_force"
        ain_ok = True
        for k, block in enumerate(dataset.blocks):
            cert = check_ain_bruteforce(block.design, tolerance=ain_tolerance)
            if cert.verdict != AIN:
                ain_ok = False
                witness = cert.witness
                details["ain_failed_patient"] = block.patient_id
                details.setdefault("failed", "per-patient AIN")
                break
    else:
        details["ain_mode"] = "assume_continuous"
        details["ain_assumption"] = ("per-patient AIN assumed; holds with "
                                     "probability one for continuous designs")
        ain_ok = True

    if ratio_ok and ain_ok:
        return UniquenessCertificate(UNIQUE_BY_THEOREM1, details=details)
    return UniquenessCertificate(INCONCLUSIVE, witness=witness, details=details)


def null_space_direction(design: np.ndarray, eset: EquicorrelationSet) -> np.ndarray | None:
    """A unit vector in the null space of the equicorrelation submatrix, if any."""
    sub = np.asarray(design, dtype=float)[:, eset.indices]
    _, sing, Vt = np.linalg.svd(sub, full_matrices=True)
    rank = int(np.sum(sing > RANK_EPS * (sing[0] if sing.size else 0.0)))
    if rank >= sub.shape[1]:
        return None
    z = np.zeros(design.shape[1])
    z[eset.indices] = Vt[-1]
    return z
