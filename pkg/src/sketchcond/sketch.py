"""Randomized preprocessing that builds a low-rank conditioner from data.

Pipeline, for X in R^{n x m} with examples as columns:

    Z = X Omega            Omega m x r, gaussian N(0, 1/r) or +-1/sqrt(r)
    P = orth(Z)            n x r
    Y = P^T X              r x m
    U' = top-k eigenvectors of Y Y^T
    Q = P U'               n x k, orthonormal
    C~ = (Q^T X)(Q^T X)^T / m
    B  = C~^{1/2},  B^{-1} = C~^{-1/2}
    a  = sqrt((tr C - tr C~) / (n - k))

tr C is taken as ||X||_F^2 / m; the n x n second moment is never formed,
so the whole preprocessing runs in O(mnr) time and O(n(r+k) + m r)
extra space. Omega comes from the counter-based generator, so the
output is a deterministic function of (X, config).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .conditioner import LowRankConditioner, residual_scale_flagged
from .errors import ConfigError, RankDeficiencyError
from .linalg import check_matrix, orthonormal_range, psd_sqrt_pair, qr_orthonormal, sym_eig, symmetrize

GAUSSIAN = "gaussian"
RADEMACHER = "rademacher"

# substream labels for the counter RNG
_OMEGA_STREAM = 0x5E7C


@dataclass(frozen=True)
class SketchConfig:
    k: int
    r: int | None = None  # sketch width, defaults to 2k
    seed: int = 0
    distribution: str = GAUSSIAN

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"target rank must be >= 1, got {self.k}")
        if self.distribution not in (GAUSSIAN, RADEMACHER):
            raise ConfigError(f"unknown sketch distribution {self.distribution!r}")
        if self.r is not None and self.r < self.k:
            raise ConfigError(f"sketch width r={self.r} must be >= k={self.k}")

    @property
    def width(self) -> int:
        return self.r if self.r is not None else 2 * self.k

    def validate_for(self, n: int, m: int) -> None:
        if self.k >= n:
            raise ConfigError(f"target rank k={self.k} must be below the dimension n={n}")
        if self.width > m:
            raise ConfigError(f"sketch width r={self.width} exceeds the sample count m={m}")


@dataclass
class SketchReport:
    """Everything measured while building a sketched conditioner."""

    n: int
    m: int
    k: int
    r: int
    seed: int
    distribution: str
    trace_c: float
    trace_ctilde: float
    projection_residual: float  # ||Q Q^T X~ - X~||_F for X~ = X / sqrt(m)
    degenerate: bool
    elapsed: dict[str, float] = field(default_factory=dict)       # stage -> seconds
    stage_shapes: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "n": self.n, "m": self.m, "k": self.k, "r": self.r,
            "seed": self.seed, "distribution": self.distribution,
            "trace_c": self.trace_c, "trace_ctilde": self.trace_ctilde,
            "projection_residual": self.projection_residual,
            "degenerate": self.degenerate,
            "elapsed_seconds": dict(self.elapsed),
            "stage_shapes": {k: list(v) for k, v in self.stage_shapes.items()},
        }


def _sample_omega(m: int, r: int, seed: int, distribution: str) -> np.ndarray:
    omega_seed = rng.split(seed, _OMEGA_STREAM)
    if distribution == GAUSSIAN:
        return rng.gaussian_matrix(omega_seed, m, r) / math.sqrt(r)
    return rng.rademacher_matrix(omega_seed, m, r) / math.sqrt(r)


def random_sketch(x, cfg: SketchConfig) -> np.ndarray:
    """Z = X Omega with Omega drawn from the configured distribution."""
    x = check_matrix(x, "X")
    cfg.validate_for(*x.shape)
    omega = _sample_omega(x.shape[1], cfg.width, cfg.seed, cfg.distribution)
    return x @ omega


def _range_pipeline(x: np.ndarray, cfg: SketchConfig, stages: dict | None = None,
                    shapes: dict | None = None) -> np.ndarray:
    """Q for one (X, cfg); raises RankDeficiencyError if the sketch misses rank k."""

    def mark(name, t0, arr):
        if stages is not None:
            stages[name] = time.perf_counter() - t0
        if shapes is not None:
            shapes[name] = arr.shape

    t0 = time.perf_counter()
    z = random_sketch(x, cfg)
    mark("sketch", t0, z)

    t0 = time.perf_counter()
    if z.shape[1] <= z.shape[0]:
        try:
            p = qr_orthonormal(z)
        except RankDeficiencyError as err:
            if err.detected_rank < cfg.k:
                raise
            # the sketch landed in a lower-dimensional space that still covers k
            p = orthonormal_range(z)
    else:
        # width exceeds the dimension: orthonormalize by rank-truncating SVD
        p = orthonormal_range(z)
    if p.shape[1] < cfg.k:
        raise RankDeficiencyError("sketch spans fewer than k directions", p.shape[1])
    mark("orthonormalize", t0, p)

    t0 = time.perf_counter()
    y = p.T @ x
    mark("project", t0, y)

    t0 = time.perf_counter()
    gram = symmetrize(y @ y.T)
    e = sym_eig(gram)
    # gram eigenvalues are squared singular values of Y: square the threshold
    if e.values[0] <= 0.0 or e.values[cfg.k - 1] <= 1e-20 * e.values[0]:
        rank = int(np.sum(e.values > 1e-20 * max(e.values[0], 0.0)))
        raise RankDeficiencyError("sketched data has rank below k", rank)
    q = p @ e.vectors[:, :cfg.k]
    mark("rotate", t0, q)
    return q


def randomized_range_finder(x, cfg: SketchConfig) -> np.ndarray:
    """Orthonormal Q approximating the dominant rank-k column space of X.

    If the sketch itself comes out rank-deficient (probability zero for
    generic data) the draw is retried once with an offset seed before the
    failure is reported.
    """
    x = check_matrix(x, "X")
    cfg.validate_for(*x.shape)
    try:
        return _range_pipeline(x, cfg)
    except RankDeficiencyError:
        retry = SketchConfig(k=cfg.k, r=cfg.r, seed=cfg.seed + 1, distribution=cfg.distribution)
        return _range_pipeline(x, retry)


def sketched_preprocessing(x, cfg: SketchConfig) -> tuple[LowRankConditioner, SketchReport]:
    """Build the low-rank conditioner for a dataset without forming C."""
    x = check_matrix(x, "X")
    cfg.validate_for(*x.shape)
    n, m = x.shape
    stages: dict[str, float] = {}
    shapes: dict[str, tuple[int, ...]] = {}

    try:
        q = _range_pipeline(x, cfg, stages, shapes)
    except RankDeficiencyError:
        retry = SketchConfig(k=cfg.k, r=cfg.r, seed=cfg.seed + 1, distribution=cfg.distribution)
        stages.clear()
        shapes.clear()
        q = _range_pipeline(x, retry, stages, shapes)

    t0 = time.perf_counter()
    w = q.T @ x
    ctilde = symmetrize(w @ w.T / m)
    stages["gram"] = time.perf_counter() - t0
    shapes["gram"] = ctilde.shape

    t0 = time.perf_counter()
    b, b_inv = psd_sqrt_pair(ctilde)
    stages["sqrt"] = time.perf_counter() - t0
    shapes["sqrt"] = b.shape

    t0 = time.perf_counter()
    # vdot streams over the flattened array; no m x n temporary
    trace_c = float(np.vdot(x, x) / m)
    trace_ctilde = float(np.trace(ctilde))
    a, degenerate = residual_scale_flagged(trace_c, trace_ctilde, n, cfg.k)
    stages["scale"] = time.perf_counter() - t0

    cond = LowRankConditioner(q=q, b=b, b_inv=b_inv, a=a, degenerate=degenerate)
    report = SketchReport(
        n=n, m=m, k=cfg.k, r=cfg.width, seed=cfg.seed, distribution=cfg.distribution,
        trace_c=trace_c, trace_ctilde=trace_ctilde,
        projection_residual=math.sqrt(max(trace_c - trace_ctilde, 0.0)),
        degenerate=degenerate, elapsed=stages, stage_shapes=shapes,
    )
    return cond, report
