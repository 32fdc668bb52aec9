"""Multi-patient regression data: containers, CSV ingestion, synthetic generators.

A dataset is a list of per-patient blocks sharing one feature schema. All
containers are immutable after construction; generators are pure functions
of their arguments (including the seed).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInputError, ParseError, SchemaError

INTERCEPT_NAME = "_intercept"


@dataclass(frozen=True)
class PatientBlock:
    """Design matrix and targets for one patient."""

    patient_id: str
    design: np.ndarray  # (n_k, p)
    targets: np.ndarray  # (n_k,)

    def __post_init__(self):
        design = np.asarray(self.design, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        if design.ndim != 2:
            raise ValueError(f"design for {self.patient_id!r} must be 2-D")
        if targets.ndim != 1 or targets.shape[0] != design.shape[0]:
            raise ValueError(f"targets for {self.patient_id!r} misaligned with design")
        if design.shape[0] < 1:
            raise ValueError(f"patient {self.patient_id!r} has no rows")
        if not (np.isfinite(design).all() and np.isfinite(targets).all()):
            raise ValueError(f"non-finite values in block {self.patient_id!r}")
        design.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "targets", targets)

    @property
    def n_rows(self) -> int:
        return self.design.shape[0]


@dataclass(frozen=True)
class MultiTaskDataset:
    """Ordered patient blocks with a shared feature schema."""

    blocks: tuple[PatientBlock, ...]
    feature_names: tuple[str, ...]
    has_intercept_column: bool = False

    def __post_init__(self):
        blocks = tuple(self.blocks)
        names = tuple(self.feature_names)
        if len(blocks) < 1:
            raise ValueError("dataset needs at least one patient block")
        p = len(names)
        for b in blocks:
            if b.design.shape[1] != p:
                raise ValueError(
                    f"block {b.patient_id!r} has {b.design.shape[1]} columns, expected {p}"
                )
        ids = [b.patient_id for b in blocks]
        if len(set(ids)) != len(ids):
            raise ValueError("patient ids must be distinct")
        if self.has_intercept_column:
            if INTERCEPT_NAME not in names:
                raise ValueError(f"intercept flag set but no {INTERCEPT_NAME!r} column")
            j = names.index(INTERCEPT_NAME)
            for b in blocks:
                if not np.all(b.design[:, j] == 1.0):
                    raise ValueError(f"intercept column not constant 1 in {b.patient_id!r}")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "feature_names", names)

    @property
    def kappa(self) -> int:
        return len(self.blocks)

    @property
    def p(self) -> int:
        return len(self.feature_names)

    @property
    def patient_ids(self) -> tuple[str, ...]:
        return tuple(b.patient_id for b in self.blocks)

    @property
    def n_per_patient(self) -> tuple[int, ...]:
        return tuple(b.n_rows for b in self.blocks)

    @property
    def total_rows(self) -> int:
        return sum(b.n_rows for b in self.blocks)

    @property
    def intercept_index(self) -> int | None:
        if not self.has_intercept_column:
            return None
        return self.feature_names.index(INTERCEPT_NAME)


@dataclass(frozen=True)
class TruePopulation:
    """Ground-truth coefficients behind a synthetic dataset.

    ``thetas`` has one row per patient, aligned with the dataset's feature
    columns. When ``has_intercept`` is set, the ``_intercept`` column is held
    at 1 instead of being drawn.
    """

    thetas: np.ndarray  # (kappa, p)
    feature_names: tuple[str, ...]
    noise_sd: float = 1.0
    seed: int = 0
    has_intercept: bool = False
    patient_types: tuple[str, ...] = field(default=())
    # columns held constant within each patient, e.g. an observed group flag:
    # ((name, (value per patient, ...)), ...)
    constant_features: tuple[tuple[str, tuple[float, ...]], ...] = field(default=())

    def __post_init__(self):
        thetas = np.asarray(self.thetas, dtype=float)
        if thetas.ndim != 2 or thetas.shape[1] != len(self.feature_names):
            raise ValueError("thetas must be (kappa, p) matching feature_names")
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be > 0")
        thetas.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def kappa(self) -> int:
        return self.thetas.shape[0]


def _draw_blocks(pop: TruePopulation, n_rows: int, rng: np.random.Generator,
                 id_prefix: str = "patient") -> MultiTaskDataset:
    names = pop.feature_names
    icol = names.index(INTERCEPT_NAME) if pop.has_intercept else None
    const_cols = [(names.index(name), vals) for name, vals in pop.constant_features]
    blocks = []
    for k in range(pop.kappa):
        X = rng.standard_normal((n_rows, len(names)))
        if icol is not None:
            X[:, icol] = 1.0
        for j, vals in const_cols:
            X[:, j] = vals[k]
        y = X @ pop.thetas[k] + pop.noise_sd * rng.standard_normal(n_rows)
        blocks.append(PatientBlock(f"{id_prefix}{k + 1}", X, y))
    return MultiTaskDataset(tuple(blocks), names, has_intercept_column=pop.has_intercept)


def generate_small_example(seed: int) -> tuple[MultiTaskDataset, TruePopulation]:
    """Five-patient toy population (p=4, n=64) with hand-picked coefficients."""
    shared = np.array([0.0, 0.0, 3.0, 3.0])
    thetas = np.array([
        shared, shared, shared,
        [0.0, 0.0, -3.0, 3.0],
        [0.0, 3.0, 0.0, 3.0],
    ])
    names = ("x1", "x2", "x3", "x4")
    pop = TruePopulation(thetas, names, noise_sd=1.0, seed=seed)
    rng = np.random.default_rng(seed)
    return _draw_blocks(pop, 64, rng), pop


def tau_vectors(p: int) -> np.ndarray:
    """The three patient-type coefficient patterns, rows tau1, tau2, tau3."""
    if p % 8 != 0:
        raise ValueError("p must be divisible by 8")
    tau1 = np.zeros(p)
    tau1[: p // 4] = 3.0
    tau2 = np.zeros(p)
    tau2[: p // 2] = [3.0 if i % 2 == 0 else -3.0 for i in range(p // 2)]
    tau3 = np.zeros(p)
    tau3[: p // 8] = [-3.0 if i % 2 == 0 else 3.0 for i in range(p // 8)]
    return np.vstack([tau1, tau2, tau3])


def generate_tau_population(p: int, kappa: int, n_per_patient: int,
                            seed: int) -> tuple[MultiTaskDataset, TruePopulation]:
    """Mixed population: kappa/8 patients each of types 2 and 3, the rest type 1."""
    if p % 8 != 0:
        raise ValueError("p must be divisible by 8")
    if kappa % 8 != 0:
        raise ValueError("kappa must be divisible by 8")
    taus = tau_vectors(p)
    n_minor = kappa // 8
    types = ["tau2"] * n_minor + ["tau3"] * n_minor + ["tau1"] * (kappa - 2 * n_minor)
    idx = {"tau1": 0, "tau2": 1, "tau3": 2}
    thetas = np.vstack([taus[idx[t]] for t in types])
    names = tuple(f"x{j + 1}" for j in range(p))
    pop = TruePopulation(thetas, names, noise_sd=1.0, seed=seed,
                         patient_types=tuple(types))
    rng = np.random.default_rng(seed)
    return _draw_blocks(pop, n_per_patient, rng), pop


def generate_outlier_scenario(kappa: int, n_per_patient: int, p: int, c: float,
                              z_probability: float, seed: int,
                              include_z: bool = False,
                              ) -> tuple[MultiTaskDataset, TruePopulation, np.ndarray]:
    """Population where a Bernoulli per-patient shift enters the intercept.

    The response is 1 + x1 + c*Z + noise; features x2..xp are inert
    distractors. Z is hidden unless ``include_z`` is set, in which case it is
    appended as an observed constant-per-patient column.
    """
    if kappa < 1 or n_per_patient < 1:
        raise ValueError("kappa and n_per_patient must be >= 1")
    if not 0.0 <= z_probability <= 1.0:
        raise ValueError("z_probability must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    z = (rng.random(kappa) < z_probability).astype(float)
    names = [f"x{j + 1}" for j in range(p)]
    if include_z:
        names.append("z")
    names.append(INTERCEPT_NAME)
    ncol = len(names)
    blocks = []
    thetas = np.zeros((kappa, ncol))
    for k in range(kappa):
        X = rng.standard_normal((n_per_patient, ncol))
        X[:, -1] = 1.0
        theta = np.zeros(ncol)
        theta[0] = 1.0
        if include_z:
            X[:, -2] = z[k]
            theta[-2] = c
            theta[-1] = 1.0
        else:
            theta[-1] = 1.0 + c * z[k]
        thetas[k] = theta
        y = X @ theta + rng.standard_normal(n_per_patient)
        blocks.append(PatientBlock(f"patient{k + 1}", X, y))
    const = (("z", tuple(z)),) if include_z else ()
    pop = TruePopulation(thetas, tuple(names), noise_sd=1.0, seed=seed,
                         has_intercept=True, constant_features=const)
    ds = MultiTaskDataset(tuple(blocks), tuple(names), has_intercept_column=True)
    return ds, pop, z.astype(bool)


def holdout_testset(population: TruePopulation, n_test: int, seed: int) -> MultiTaskDataset:
    """Fresh draws from the same coefficients, n_test rows per patient."""
    if n_test < 1:
        raise ValueError("n_test must be >= 1")
    rng = np.random.default_rng(seed)
    return _draw_blocks(population, n_test, rng)


def load_csv(path, patient_column: str = "patient_id", target_column: str = "y",
             add_intercept: bool = False) -> MultiTaskDataset:
    """Read a long-format CSV: one row per observation, grouped by patient id.

    All columns other than the patient and target columns are features, in
    header order. Cells must parse as finite reals.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path}: file is empty") from None
        for col in (patient_column, target_column):
            if col not in header:
                raise SchemaError(f"{path}: missing required column {col!r}")
        pcol = header.index(patient_column)
        ycol = header.index(target_column)
        feat_cols = [i for i in range(len(header)) if i not in (pcol, ycol)]
        feat_names = [header[i] for i in feat_cols]

        groups: dict[str, tuple[list, list]] = {}
        order: list[str] = []
        nrows = 0
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {rownum} has {len(row)} cells, expected {len(header)}")
            nrows += 1
            pid = row[pcol]
            vals = []
            for i in [ycol] + feat_cols:
                try:
                    v = float(row[i])
                except ValueError:
                    v = float("nan")
                if not np.isfinite(v):
                    raise ParseError(
                        f"{path}: row {rownum}, column {header[i]!r}: "
                        f"cannot parse {row[i]!r} as a finite real"
                    )
                vals.append(v)
            if pid not in groups:
                groups[pid] = ([], [])
                order.append(pid)
            groups[pid][0].append(vals[1:])
            groups[pid][1].append(vals[0])
        if nrows == 0:
            raise EmptyInputError(f"{path}: no data rows")

    blocks = []
    for pid in order:
        X = np.asarray(groups[pid][0], dtype=float)
        y = np.asarray(groups[pid][1], dtype=float)
        if add_intercept:
            X = np.hstack([X, np.ones((X.shape[0], 1))])
        blocks.append(PatientBlock(pid, X, y))
    names = tuple(feat_names) + ((INTERCEPT_NAME,) if add_intercept else ())
    return MultiTaskDataset(tuple(blocks), names, has_intercept_column=add_intercept)


def write_csv(dataset: MultiTaskDataset, path, patient_column: str = "patient_id",
              target_column: str = "y") -> None:
    """Write a dataset in the long CSV format accepted by :func:`load_csv`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([patient_column, target_column, *dataset.feature_names])
        for b in dataset.blocks:
            for i in range(b.n_rows):
                writer.writerow([b.patient_id, format(b.targets[i], ".17g"),
                                 *(format(v, ".17g") for v in b.design[i])])
