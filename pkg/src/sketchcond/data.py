"""Datasets: labelled feature matrices, CSV persistence and a synthetic
generator with controlled spectral decay.

Examples are stored as columns of an n x m matrix so the second moment is
X X^T / m. The CSV layout is one example per row: ``label,f1,...,fn``
behind a single header line, floats printed with 17 significant digits so
save/load round-trips are bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ConfigError, DataError
from .linalg import qr_orthonormal

# substream labels for the counter RNG
_FEATURES_STREAM = 0xDA7A
_PLANTED_STREAM = 0x917A
_LABEL_NOISE_STREAM = 0x401E


@dataclass
class Dataset:
    x: np.ndarray          # n x m, float64, examples as columns
    y: np.ndarray          # (m,) integer labels in [0, num_classes)
    num_classes: int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got shape {self.x.shape}")
        if not np.all(np.isfinite(self.x)):
            raise DataError("feature matrix has non-finite entries")
        if self.y.ndim != 1 or self.y.shape[0] != self.x.shape[1]:
            raise DataError(
                f"label count {self.y.shape} does not match the {self.x.shape[1]} examples"
            )
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise DataError(
                f"labels must lie in [0, {self.num_classes}), got range "
                f"[{self.y.min()}, {self.y.max()}]"
            )

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    m: int
    p: int
    decay_power: float = 2.0   # eigenvalue i of the population C is i^-decay_power
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ConfigError(f"need n, m >= 1, got n={self.n}, m={self.m}")
        if self.p < 2:
            raise ConfigError(f"need at least 2 classes, got {self.p}")
        if self.p > self.n:
            raise ConfigError(f"planted rows cannot be orthonormal with p={self.p} > n={self.n}")
        if self.decay_power < 0.0:
            raise ConfigError(f"decay power must be >= 0, got {self.decay_power}")
        if self.noise < 0.0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, np.ndarray]:
    """Draw a dataset whose population second moment decays as i^-decay_power.

    Features are x_i = D^{1/2} g_i with g_i standard normal and
    D = diag(1, 2^-d, ..., n^-d). Labels are the argmax of a planted
    score matrix plus gaussian noise; the planted weight matrix has
    orthonormal (unit-norm, uncorrelated) rows and is returned alongside
    the data. With noise 0 the planted weights classify the training set
    perfectly.
    """
    g = rng.gaussian_matrix(rng.split(spec.seed, _FEATURES_STREAM), spec.n, spec.m)
    scales = np.arange(1, spec.n + 1, dtype=np.float64) ** (-spec.decay_power / 2.0)
    x = g * scales[:, None]

    basis = rng.gaussian_matrix(rng.split(spec.seed, _PLANTED_STREAM), spec.n, spec.p)
    planted = qr_orthonormal(basis).T  # p x n, orthonormal rows

    scores = planted @ x
    if spec.noise > 0.0:
        xi = rng.gaussian_matrix(rng.split(spec.seed, _LABEL_NOISE_STREAM), spec.p, spec.m)
        scores = scores + spec.noise * xi
    y = np.argmax(scores, axis=0)
    return Dataset(x=x, y=y, num_classes=spec.p), planted


def save_csv(dataset: Dataset, path) -> None:
    n = dataset.n
    with open(path, "w", encoding="ascii") as fh:
        fh.write("label," + ",".join(f"f{i + 1}" for i in range(n)) + "\n")
        for j in range(dataset.m):
            feats = ",".join(format(v, ".17g") for v in dataset.x[:, j])
            fh.write(f"{dataset.y[j]},{feats}\n")


def load_csv(path) -> Dataset:
    """Read ``label,f1,...,fn`` rows behind a one-line header.

    Ragged rows, non-numeric fields and negative labels are reported with
    their line number; the class count is max label + 1.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    rows = [(i, line) for i, line in enumerate(lines[1:], start=2) if line.strip()]
    if not rows:
        raise DataError(f"{path}: no data rows")

    labels: list[int] = []
    columns: list[np.ndarray] = []
    width = None
    for lineno, line in rows:
        fields = line.split(",")
        if width is None:
            width = len(fields)
            if width < 2:
                raise DataError(f"{path}:{lineno}: expected 'label,f1,...', got {line!r}")
        elif len(fields) != width:
            raise DataError(
                f"{path}:{lineno}: ragged row ({len(fields)} fields, expected {width})"
            )
        try:
            label = int(fields[0])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric label {fields[0]!r}") from None
        if label < 0:
            raise DataError(f"{path}:{lineno}: negative label {label}")
        try:
            feats = np.array([float(f) for f in fields[1:]], dtype=np.float64)
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric feature field") from None
        labels.append(label)
        columns.append(feats)

    x = np.stack(columns, axis=1)
    y = np.array(labels, dtype=np.int64)
    return Dataset(x=x, y=y, num_classes=int(y.max()) + 1)
