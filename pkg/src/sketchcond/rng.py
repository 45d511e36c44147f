"""Deterministic counter-based random streams.

Every draw is a pure function of ``(seed, counter)``: the value at counter
``c`` is the splitmix64 finalizer applied to ``seed + (c+1) * GOLDEN``.
A stream can therefore be regenerated from any offset, in any order, and
the result is identical regardless of chunking or threading. Gaussian
variates come from Box-Muller on counter pairs ``(2i, 2i+1)``, so element
``i`` of a gaussian stream is likewise a pure function of its index.

Independent substreams are derived with :func:`split`, which hashes a
(seed, stream label) pair into a fresh 64-bit seed.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_GOLDEN_U = np.uint64(_GOLDEN)
_MIX1_U = np.uint64(_MIX1)
_MIX2_U = np.uint64(_MIX2)
_TWO_NEG_53 = 1.0 / 9007199254740992.0  # 2**-53

# elements generated per chunk; bounds transient memory on huge draws
_CHUNK = 1 << 22


def _mix_int(z: int) -> int:
    """splitmix64 finalizer on a Python int (exact 64-bit arithmetic)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1_U
    z = (z ^ (z >> np.uint64(27))) * _MIX2_U
    return z ^ (z >> np.uint64(31))


def split(seed: int, stream: int) -> int:
    """Derive an independent substream seed from (seed, stream label)."""
    a = _mix_int((seed & _MASK) + _GOLDEN)
    b = _mix_int((stream & _MASK) ^ _MIX1)
    return _mix_int(a ^ ((b * _GOLDEN) & _MASK))


def _raw(seed: int, start: int, count: int) -> np.ndarray:
    """uint64 words at counters start..start+count-1."""
    base = np.uint64(seed & _MASK)
    ctr = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    return _mix_array(base + _GOLDEN_U * ctr)


def uniform(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Uniform floats in [0, 1), one per counter."""
    out = np.empty(count, dtype=np.float64)
    for lo in range(0, count, _CHUNK):
        hi = min(lo + _CHUNK, count)
        out[lo:hi] = (_raw(seed, start + lo, hi - lo) >> np.uint64(11)) * _TWO_NEG_53
    return out


def gaussian(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Standard normal floats; element i consumes counters 2(start+i), 2(start+i)+1."""
    out = np.empty(count, dtype=np.float64)
    for lo in range(0, count, _CHUNK):
        hi = min(lo + _CHUNK, count)
        raw = _raw(seed, 2 * (start + lo), 2 * (hi - lo))
        bits = (raw >> np.uint64(11)).astype(np.float64)
        u1 = (bits[0::2] + 1.0) * _TWO_NEG_53  # (0, 1], keeps log finite
        u2 = bits[1::2] * _TWO_NEG_53
        out[lo:hi] = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    return out


def rademacher(seed: int, count: int, start: int = 0) -> np.ndarray:
    """+1/-1 floats, one per counter."""
    out = np.empty(count, dtype=np.float64)
    for lo in range(0, count, _CHUNK):
        hi = min(lo + _CHUNK, count)
        out[lo:hi] = np.where(_raw(seed, start + lo, hi - lo) >> np.uint64(63), -1.0, 1.0)
    return out


def integers(seed: int, count: int, bound: int, start: int = 0) -> np.ndarray:
    """Integers uniform on [0, bound); bias is O(bound / 2**53)."""
    if bound < 1:
        raise ValueError(f"bound must be >= 1, got {bound}")
    u = uniform(seed, count, start)
    return np.minimum((u * bound).astype(np.int64), bound - 1)


def gaussian_matrix(seed: int, rows: int, cols: int, start: int = 0) -> np.ndarray:
    """rows x cols standard-normal matrix; entry (i, j) is gaussian element i*cols + j."""
    return gaussian(seed, rows * cols, start).reshape(rows, cols)


def rademacher_matrix(seed: int, rows: int, cols: int, start: int = 0) -> np.ndarray:
    return rademacher(seed, rows * cols, start).reshape(rows, cols)


def uniform_matrix(seed: int, rows: int, cols: int, start: int = 0) -> np.ndarray:
    return uniform(seed, rows * cols, start).reshape(rows, cols)
