"""Preconditioners for the conditioned SGD update.

Three variants:

  * Identity          -- plain SGD.
  * Full              -- A = C^{1/2} with a precomputed floored inverse.
  * LowRank           -- A = Q B Q^T + a (I - Q Q^T) with Q n x k
                         orthonormal, B k x k SPD and a > 0. Its inverse
                         is Q B^{-1} Q^T + a^{-1} (I - Q Q^T), so applying
                         A^{-1} to a vector costs O(nk) and never touches
                         an n x n matrix.

The isotropic scale of the low-rank variant is
    a = sqrt((tr C - tr C~) / (n - k)),
floored when the captured trace exhausts the total (degenerate data).

Conditioners are immutable and safe to share across threads. They can be
saved to and loaded from a plain-text record; floats are printed with 17
significant digits so round-trips are bit-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Union

import numpy as np

from .errors import ConfigError, LinalgError, RankDeficiencyError
from .linalg import check_matrix, psd_sqrt_pair, sym_eig, symmetrize

_ORTHO_TOL = 1e-10
DEFAULT_RESIDUAL_EPS = 1e-6


@dataclass(frozen=True)
class IdentityConditioner:
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.dim}")

    def apply_inverse(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.dim:
            raise LinalgError(f"expected leading dimension {self.dim}, got {x.shape}")
        return x

    def materialize(self) -> np.ndarray:
        return np.eye(self.dim)

    def explicit_inverse(self) -> np.ndarray:
        return np.eye(self.dim)


@dataclass(frozen=True)
class FullConditioner:
    sqrt: np.ndarray      # C^{1/2}
    inv_sqrt: np.ndarray  # C^{-1/2} with floored eigenvalues

    def __post_init__(self):
        s = check_matrix(self.sqrt, "sqrt factor")
        si = check_matrix(self.inv_sqrt, "inverse sqrt factor")
        if s.shape != si.shape or s.shape[0] != s.shape[1]:
            raise LinalgError(f"factor shapes disagree: {s.shape} vs {si.shape}")

    @property
    def dim(self) -> int:
        return self.sqrt.shape[0]

    def apply_inverse(self, x) -> np.ndarray:
        return self.inv_sqrt @ np.asarray(x, dtype=np.float64)

    def materialize(self) -> np.ndarray:
        return self.sqrt

    def explicit_inverse(self) -> np.ndarray:
        return self.inv_sqrt


@dataclass(frozen=True)
class LowRankConditioner:
    q: np.ndarray        # n x k, orthonormal columns
    b: np.ndarray        # k x k SPD
    b_inv: np.ndarray    # k x k
    a: float
    a_inv: float = field(default=0.0)
    degenerate: bool = False  # set when the residual scale hit its floor

    def __post_init__(self):
        q = check_matrix(self.q, "Q")
        b = check_matrix(self.b, "B")
        b_inv = check_matrix(self.b_inv, "B inverse")
        n, k = q.shape
        if k > n:
            raise LinalgError(f"Q must be tall, got {q.shape}")
        if b.shape != (k, k) or b_inv.shape != (k, k):
            raise LinalgError(f"B must be {k} x {k}, got {b.shape} and {b_inv.shape}")
        if np.max(np.abs(q.T @ q - np.eye(k))) > _ORTHO_TOL:
            raise LinalgError("Q columns are not orthonormal")
        if np.max(np.abs(b - b.T)) > _ORTHO_TOL * max(1.0, np.abs(b).max()):
            raise LinalgError("B is not symmetric")
        if np.max(np.abs(b @ b_inv - np.eye(k))) > _ORTHO_TOL * max(1.0, np.abs(b).max()):
            raise LinalgError("B inverse does not invert B")
        if not self.a > 0.0:
            raise ConfigError(f"isotropic scale must be positive, got {self.a}")
        if self.a_inv == 0.0:
            object.__setattr__(self, "a_inv", 1.0 / self.a)
        elif abs(self.a * self.a_inv - 1.0) > 1e-12:
            raise ConfigError("a_inv is not the reciprocal of a")

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    @property
    def rank(self) -> int:
        return self.q.shape[1]

    def apply_inverse(self, x) -> np.ndarray:
        """A^{-1} x = Q B^{-1} (Q^T x) + a^{-1} (x - Q Q^T x), in O(nk)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.dim:
            raise LinalgError(f"expected leading dimension {self.dim}, got {x.shape}")
        u = self.q.T @ x
        return self.q @ (self.b_inv @ u) + self.a_inv * (x - self.q @ u)

    def materialize(self) -> np.ndarray:
        n = self.dim
        return symmetrize(self.q @ self.b @ self.q.T + self.a * (np.eye(n) - self.q @ self.q.T))

    def explicit_inverse(self) -> np.ndarray:
        n = self.dim
        return symmetrize(
            self.q @ self.b_inv @ self.q.T + self.a_inv * (np.eye(n) - self.q @ self.q.T)
        )


Conditioner = Union[IdentityConditioner, FullConditioner, LowRankConditioner]


def apply_inverse_flops(cond: Conditioner, batch: int = 1) -> int:
    """Multiply-add count of one apply_inverse call; Theta(nk) for LowRank."""
    if isinstance(cond, IdentityConditioner):
        return 0
    if isinstance(cond, FullConditioner):
        return 2 * cond.dim * cond.dim * batch
    n, k = cond.dim, cond.rank
    # Q^T x, B^{-1} u, Q w, Q u and the axpy on the residual part
    return (2 * n * k * 3 + 2 * k * k + 3 * n) * batch


def build_identity(n: int) -> IdentityConditioner:
    return IdentityConditioner(dim=n)


def build_full(c, eps_floor: float | None = None) -> FullConditioner:
    """A = C^{1/2} for PSD C; the inverse uses eigenvalues floored at eps_floor."""
    sqrt, inv_sqrt = psd_sqrt_pair(c, eps_floor)
    return FullConditioner(sqrt=sqrt, inv_sqrt=inv_sqrt)


def residual_scale(trace_c: float, trace_ctilde: float, n: int, k: int,
                   eps: float = DEFAULT_RESIDUAL_EPS) -> float:
    """Isotropic scale sqrt((tr C - tr C~) / (n - k)), floored when degenerate."""
    a, _ = residual_scale_flagged(trace_c, trace_ctilde, n, k, eps)
    return a


def residual_scale_flagged(trace_c: float, trace_ctilde: float, n: int, k: int,
                           eps: float = DEFAULT_RESIDUAL_EPS) -> tuple[float, bool]:
    """As residual_scale, plus a flag marking that the floor was applied.

    The floor eps * max(1, tr C / n) kicks in when the captured trace
    accounts for all of tr C (up to round-off), i.e. the data is
    effectively rank k and the residual subspace carries no mass.
    """
    if k >= n:
        raise ConfigError(f"rank k={k} must be below the dimension n={n}")
    if trace_c < 0.0:
        raise ConfigError(f"trace of C must be nonnegative, got {trace_c}")
    floor = eps * max(1.0, trace_c / n)
    residual = (trace_c - trace_ctilde) / (n - k)
    if residual <= 0.0:
        return floor, True
    a = math.sqrt(residual)
    if a < floor:
        return floor, True
    return a, False


def build_exact_lowrank(c, k: int, eps: float = DEFAULT_RESIDUAL_EPS) -> LowRankConditioner:
    """Low-rank conditioner from the top-k eigenvectors of C.

    Q spans the dominant k-dimensional eigenspace, B = (Q^T C Q)^{1/2} and
    the isotropic scale spreads the leftover trace over the complement.
    """
    c = check_matrix(c, "C")
    n = c.shape[0]
    if not 1 <= k < n:
        raise ConfigError(f"need 1 <= k < n, got k={k}, n={n}")
    e = sym_eig(c)
    lmax = e.values[0]
    if lmax <= 0.0:
        raise LinalgError("build_exact_lowrank: C is effectively zero")
    num_rank = int(np.sum(e.values > 1e-12 * lmax))
    if num_rank < k:
        raise RankDeficiencyError("build_exact_lowrank: rank(C) below k", num_rank)
    q = e.vectors[:, :k]
    ctilde = symmetrize(q.T @ c @ q)
    b, b_inv = psd_sqrt_pair(ctilde)
    a, degenerate = residual_scale_flagged(float(np.trace(c)), float(np.trace(ctilde)), n, k, eps)
    return LowRankConditioner(q=q, b=b, b_inv=b_inv, a=a, degenerate=degenerate)


# ---------------------------------------------------------------------------
# serialization: plain text, floats at 17 significant digits (round-trip exact)
# ---------------------------------------------------------------------------

_MAGIC = "sketchcond-conditioner v1"


def _write_floats(fh: IO[str], name: str, values: np.ndarray) -> None:
    fh.write(name + "\n")
    flat = np.asarray(values, dtype=np.float64).ravel()
    fh.write(" ".join(format(v, ".17g") for v in flat) + "\n")


def save_conditioner(cond: Conditioner, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(_MAGIC + "\n")
        if isinstance(cond, IdentityConditioner):
            fh.write(f"variant identity\nn {cond.dim}\n")
        elif isinstance(cond, FullConditioner):
            fh.write(f"variant full\nn {cond.dim}\n")
            _write_floats(fh, "sqrt", cond.sqrt)
            _write_floats(fh, "inv_sqrt", cond.inv_sqrt)
        elif isinstance(cond, LowRankConditioner):
            fh.write(f"variant lowrank\nn {cond.dim}\nk {cond.rank}\n")
            fh.write(f"degenerate {int(cond.degenerate)}\n")
            _write_floats(fh, "a", np.array([cond.a]))
            _write_floats(fh, "a_inv", np.array([cond.a_inv]))
            _write_floats(fh, "q", cond.q)
            _write_floats(fh, "b", cond.b)
            _write_floats(fh, "b_inv", cond.b_inv)
        else:
            raise ConfigError(f"cannot serialize {type(cond).__name__}")


def _read_kv(lines, key: str) -> str:
    line = next(lines).strip()
    name, _, value = line.partition(" ")
    if name != key:
        raise ConfigError(f"conditioner file: expected {key!r}, found {name!r}")
    return value


def _read_floats(lines, key: str, shape: tuple[int, ...]) -> np.ndarray:
    name = next(lines).strip()
    if name != key:
        raise ConfigError(f"conditioner file: expected block {key!r}, found {name!r}")
    values = np.array([float(tok) for tok in next(lines).split()], dtype=np.float64)
    return values.reshape(shape)


def load_conditioner(path) -> Conditioner:
    with open(path, "r", encoding="ascii") as fh:
        lines = iter(fh)
        magic = next(lines).strip()
        if magic != _MAGIC:
            raise ConfigError(f"not a conditioner file (header {magic!r})")
        variant = _read_kv(lines, "variant")
        n = int(_read_kv(lines, "n"))
        if variant == "identity":
            return IdentityConditioner(dim=n)
        if variant == "full":
            sqrt = _read_floats(lines, "sqrt", (n, n))
            inv_sqrt = _read_floats(lines, "inv_sqrt", (n, n))
            return FullConditioner(sqrt=sqrt, inv_sqrt=inv_sqrt)
        if variant == "lowrank":
            k = int(_read_kv(lines, "k"))
            degenerate = bool(int(_read_kv(lines, "degenerate")))
            a = float(_read_floats(lines, "a", (1,))[0])
            a_inv = float(_read_floats(lines, "a_inv", (1,))[0])
            q = _read_floats(lines, "q", (n, k))
            b = _read_floats(lines, "b", (k, k))
            b_inv = _read_floats(lines, "b_inv", (k, k))
            return LowRankConditioner(q=q, b=b, b_inv=b_inv, a=a, a_inv=a_inv,
                                      degenerate=degenerate)
        raise ConfigError(f"unknown conditioner variant {variant!r}")
