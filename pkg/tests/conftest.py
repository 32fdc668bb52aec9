import numpy as np
import pytest

from glop.data import MultiTaskDataset, PatientBlock


def random_dataset(rng, kappa=3, p=3, n=12, coef_scale=2.0, noise_sd=0.5,
                   equal_n=True):
    """Small Gaussian dataset with a shared signal plus per-patient tweaks."""
    g = coef_scale * rng.standard_normal(p)
    blocks = []
    for k in range(kappa):
        nk = n if equal_n else n + k
        X = rng.standard_normal((nk, p))
        theta = g + 0.5 * coef_scale * rng.standard_normal(p)
        y = X @ theta + noise_sd * rng.standard_normal(nk)
        blocks.append(PatientBlock(f"p{k + 1}", X, y))
    names = tuple(f"x{j + 1}" for j in range(p))
    return MultiTaskDataset(tuple(blocks), names)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
