"""Dense spectral kernels: symmetric EVD, thin SVD, QR orthonormalization,
PSD square roots, second moments and norms.

All routines work on float64 ndarrays and enforce a deterministic sign
convention on eigen/singular vectors (first non-negligible component of
each vector is positive) so decompositions are reproducible across runs.
The heavy lifting is delegated to LAPACK via numpy; this module owns the
ordering, sign, clamping and validation contracts on top of it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LinalgError, RankDeficiencyError

# relative threshold used for numerical-rank decisions
RANK_RTOL = 1e-10
# eigenvalues of a PSD input may undershoot zero by this relative amount
PSD_CLAMP_RTOL = 1e-10


def check_matrix(m, name: str = "matrix") -> np.ndarray:
    """Validate and return a float64 2-D array with finite entries."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise LinalgError(f"{name} must be 2-dimensional, got shape {a.shape}")
    if a.size == 0:
        raise LinalgError(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise LinalgError(f"{name} has non-finite entries")
    return a


def check_vector(v, name: str = "vector") -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise LinalgError(f"{name} must be 1-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise LinalgError(f"{name} has non-finite entries")
    return a


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _normalize_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the first non-negligible component is positive."""
    v = vectors.copy()
    absv = np.abs(v)
    colmax = absv.max(axis=0)
    colmax[colmax == 0.0] = 1.0
    lead = np.argmax(absv > 1e-12 * colmax, axis=0)
    signs = np.sign(v[lead, np.arange(v.shape[1])])
    signs[signs == 0.0] = 1.0
    return v * signs


@dataclass(frozen=True)
class SymEig:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""

    values: np.ndarray   # (n,) descending
    vectors: np.ndarray  # (n, n), orthonormal columns, sign-normalized


@dataclass(frozen=True)
class ThinSvd:
    """Thin SVD M = U diag(s) V^T with min(rows, cols) factors."""

    u: np.ndarray
    singular_values: np.ndarray  # descending, nonnegative
    v: np.ndarray


def sym_eig(m) -> SymEig:
    """Full eigendecomposition of a symmetric matrix.

    The input is symmetrized as (M + M^T)/2 before factorization, so tiny
    asymmetries from accumulated round-off are tolerated.
    """
    a = check_matrix(m, "sym_eig input")
    if a.shape[0] != a.shape[1]:
        raise LinalgError(f"sym_eig needs a square matrix, got {a.shape}")
    w, v = np.linalg.eigh(symmetrize(a))
    order = np.argsort(w, kind="stable")[::-1]
    return SymEig(values=w[order], vectors=_normalize_signs(v[:, order]))


def thin_svd(m) -> ThinSvd:
    """Thin SVD with descending singular values and sign-normalized U."""
    a = check_matrix(m, "thin_svd input")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    v = vh.T
    # carry U's sign flips over to V so U s V^T is unchanged
    absu = np.abs(u)
    colmax = absu.max(axis=0)
    colmax[colmax == 0.0] = 1.0
    lead = np.argmax(absu > 1e-12 * colmax, axis=0)
    signs = np.sign(u[lead, np.arange(u.shape[1])])
    signs[signs == 0.0] = 1.0
    return ThinSvd(u=u * signs, singular_values=s, v=v * signs)


def qr_orthonormal(m) -> np.ndarray:
    """Orthonormal basis of the column space of a full-column-rank matrix.

    Raises RankDeficiencyError with the detected numerical rank when the
    columns are dependent (threshold RANK_RTOL * sigma_1).
    """
    a = check_matrix(m, "qr input")
    rows, cols = a.shape
    if rows < cols:
        raise LinalgError(f"qr_orthonormal needs rows >= cols, got {a.shape}")
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        raise RankDeficiencyError("qr_orthonormal: zero matrix", 0)
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    if rank < cols:
        raise RankDeficiencyError("qr_orthonormal: rank-deficient input", rank)
    q, r = np.linalg.qr(a)
    d = np.sign(np.diag(r))
    d[d == 0.0] = 1.0
    return q * d


def orthonormal_range(m, max_cols: int | None = None) -> np.ndarray:
    """Orthonormal basis of the numerical column space, rank-truncated.

    Unlike qr_orthonormal this never raises on rank deficiency; it returns
    the leading singular vectors above the rank threshold (at most
    max_cols of them).
    """
    a = check_matrix(m, "range input")
    f = thin_svd(a)
    s = f.singular_values
    if s[0] == 0.0:
        raise RankDeficiencyError("orthonormal_range: zero matrix", 0)
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    if max_cols is not None:
        rank = min(rank, max_cols)
    return f.u[:, :rank]


def psd_sqrt_pair(m, eps_floor: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Square root and floored inverse square root of a PSD matrix.

    Eigenvalues in [-PSD_CLAMP_RTOL * lambda_max, 0) are clamped to zero;
    anything more negative is an error. For the inverse factor the
    eigenvalues are floored at eps_floor (default 1e-12 * lambda_max)
    before the reciprocal square root, so rank-deficient inputs yield a
    large-but-finite inverse.
    """
    e = sym_eig(m)
    lam = e.values
    lmax = lam[0]
    if lmax <= 0.0:
        raise LinalgError("psd_sqrt_pair: matrix is effectively zero (no positive eigenvalues)")
    if lam[-1] < -PSD_CLAMP_RTOL * lmax:
        raise LinalgError(
            f"psd_sqrt_pair: input is not PSD (lambda_min = {lam[-1]:.3e}, lambda_max = {lmax:.3e})"
        )
    lam = np.clip(lam, 0.0, None)
    if eps_floor is None:
        eps_floor = 1e-12 * lmax
    if lmax < eps_floor:
        raise LinalgError("psd_sqrt_pair: all eigenvalues below the floor")
    v = e.vectors
    sqrt = symmetrize((v * np.sqrt(lam)) @ v.T)
    inv_sqrt = symmetrize((v / np.sqrt(np.maximum(lam, eps_floor))) @ v.T)
    return sqrt, inv_sqrt


def second_moment(x) -> np.ndarray:
    """(1/m) X X^T for X with examples as columns; exactly symmetric."""
    a = check_matrix(x, "second_moment input")
    m = a.shape[1]
    if m < 1:
        raise LinalgError("second_moment: empty dataset")
    return symmetrize(a @ a.T / m)


def norms(m) -> tuple[float, float, float]:
    """(frobenius, spectral, trace_norm) of a matrix.

    Spectral and trace norms come from the singular values; for PSD input
    the trace norm equals the trace.
    """
    a = check_matrix(m, "norms input")
    fro = float(np.sqrt(np.sum(a * a)))
    s = np.linalg.svd(a, compute_uv=False)
    return fro, float(s[0]), float(np.sum(s))
