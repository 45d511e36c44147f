import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sketchcond import Dataset

settings.register_profile(
    "ci", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


def random_psd(gen: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    a = gen.standard_normal((n, n))
    c = a @ a.T / n * scale
    return 0.5 * (c + c.T)


def random_spd(gen: np.random.Generator, n: int, floor: float = 0.1) -> np.ndarray:
    return random_psd(gen, n) + floor * np.eye(n)


@pytest.fixture
def gen():
    return np.random.default_rng(20240817)


def two_blob_dataset(n: int, m: int, separation: float = 4.0, seed: int = 0) -> Dataset:
    """Two separable gaussian blobs, labels 0/1."""
    g = np.random.default_rng(seed)
    half = m // 2
    centers = np.zeros((2, n))
    centers[0, 0] = separation / 2.0
    centers[1, 0] = -separation / 2.0
    x0 = g.standard_normal((n, half)) + centers[0][:, None]
    x1 = g.standard_normal((n, m - half)) + centers[1][:, None]
    x = np.concatenate([x0, x1], axis=1)
    y = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(m - half, dtype=np.int64)])
    order = g.permutation(m)
    return Dataset(x=x[:, order], y=y[order], num_classes=2)
