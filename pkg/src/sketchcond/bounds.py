"""Closed-form convergence-bound calculators for conditioned SGD.

All quantities depend on the data only through the spectrum of the second
moment C and a handful of traces. With sigma an upper bound on the
spectral norm of the optimum, rho the loss Lipschitz constant and T the
iteration budget, the expected sub-optimality of the averaged iterate
obeys, for a fixed conditioner A and step size sigma / (rho sqrt(T)):

    gap <= (sigma rho / sqrt(T)) (tr A + tr(A^{-1} C))        [general]
    gap <= (sigma rho / sqrt(T)) tr(C^{1/2})                  [A = C^{1/2}]
    gap <= (sigma rho / 2 sqrt(T)) (tr B + tr(B^{-1} C~)
           + 2 sqrt((n-k)(tr C - tr C~)))                     [low rank]
    gap <= (sigma rho / sqrt(T)) (tr(C_k^{1/2})
           + sqrt((n-k)(tr C - tr C_k)))                      [exact low rank]

The general form is stated without the factor 1/2 that a sharp
optimization of the step produces; pass sharp=True to halve it. Both
conventions are reported because downstream comparisons use one or the
other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, LinalgError
from .linalg import check_matrix, sym_eig

SIGMA_NOTE = "bounds are conditional on sigma >= spectral norm of the optimum"


def _check_spectrum(spectrum) -> np.ndarray:
    s = np.asarray(spectrum, dtype=np.float64).ravel()
    if s.size == 0:
        raise ConfigError("empty spectrum")
    if not np.all(np.isfinite(s)):
        raise ConfigError("spectrum has non-finite entries")
    if np.any(s < -1e-10 * max(s.max(), 0.0)):
        raise ConfigError("spectrum has negative entries")
    if np.any(np.diff(s) > 1e-12 * max(s.max(), 1.0)):
        raise ConfigError("spectrum must be sorted in descending order")
    return np.clip(s, 0.0, None)


@dataclass(frozen=True)
class BoundInputs:
    sigma: float
    rho: float
    iterations: int
    spectrum: np.ndarray  # eigenvalues of C, descending
    k: int | None = None

    def __post_init__(self):
        if self.sigma <= 0.0 or self.rho <= 0.0:
            raise ConfigError("sigma and rho must be positive")
        if self.iterations < 1:
            raise ConfigError(f"iteration count must be >= 1, got {self.iterations}")
        object.__setattr__(self, "spectrum", _check_spectrum(self.spectrum))
        if self.k is not None and not 1 <= self.k < self.spectrum.size:
            raise ConfigError(f"k={self.k} out of range for n={self.spectrum.size}")

    @property
    def coefficient(self) -> float:
        return self.sigma * self.rho / math.sqrt(self.iterations)


def conditioned_sgd_bound(inputs: BoundInputs, trace_a: float, trace_ainv_c: float,
                          sharp: bool = False) -> float:
    """Sub-optimality bound for a fixed conditioner given its two traces."""
    if trace_a < 0.0 or trace_ainv_c < 0.0:
        raise ConfigError("conditioner traces must be nonnegative")
    value = inputs.coefficient * (trace_a + trace_ainv_c)
    return 0.5 * value if sharp else value


def full_conditioner_bound(inputs: BoundInputs) -> float:
    """Bound at the trace-optimal conditioner A = C^{1/2}."""
    return inputs.coefficient * float(np.sum(np.sqrt(inputs.spectrum)))


def lowrank_conditioner_bound(inputs: BoundInputs, trace_b: float,
                              trace_binv_ctilde: float, trace_ctilde: float) -> float:
    """Bound for A = Q B Q^T + a (I - Q Q^T) with the residual-matched a."""
    if inputs.k is None:
        raise ConfigError("lowrank bound needs the rank k")
    n = inputs.spectrum.size
    trace_c = float(np.sum(inputs.spectrum))
    residual = max(trace_c - trace_ctilde, 0.0)
    return 0.5 * inputs.coefficient * (
        trace_b + trace_binv_ctilde + 2.0 * math.sqrt((n - inputs.k) * residual)
    )


def exact_lowrank_bound(inputs: BoundInputs) -> float:
    """Bound for the low-rank conditioner built from the top-k eigenspace."""
    if inputs.k is None:
        raise ConfigError("exact lowrank bound needs the rank k")
    k, s = inputs.k, inputs.spectrum
    head = float(np.sum(np.sqrt(s[:k])))
    tail = float(np.sum(s[k:]))
    return inputs.coefficient * (head + math.sqrt((s.size - k) * tail))


def iteration_ratio(delta_gram_trace_norm: float, delta_gram_spectral_norm: float,
                    trace_c: float, trace_sqrt_c: float) -> float:
    """Iterations needed by plain SGD over iterations needed by A = C^{1/2}.

    ratio = (||D^T D||_tr tr C) / (||D^T D||_sp (tr C^{1/2})^2) for
    D the offset of the optimum from the start; always in [1/n, min(n, p)].
    Values above 1 mean the full conditioner reaches a given accuracy in
    fewer iterations.
    """
    if delta_gram_spectral_norm <= 0.0:
        raise ConfigError("spectral norm of the offset gram must be positive")
    if delta_gram_trace_norm <= 0.0 or trace_c <= 0.0 or trace_sqrt_c <= 0.0:
        raise ConfigError("iteration_ratio inputs must be positive")
    return (delta_gram_trace_norm * trace_c) / (delta_gram_spectral_norm * trace_sqrt_c ** 2)


@dataclass(frozen=True)
class FastDecayCheck:
    holds: bool
    lhs: float     # sqrt((n-k)(tr C - tr C_k))
    rhs: float     # tr C^{1/2}
    margin: float  # (constant * rhs - lhs) / rhs


def fast_decay_check(spectrum, k: int, constant: float = 1.0) -> FastDecayCheck:
    """Does sqrt((n-k)(tr C - tr C_k)) stay below constant * tr(C^{1/2})?

    When it does, the low-rank conditioner matches the full conditioner's
    bound up to the constant; lhs and rhs are reported so callers can
    apply their own constant.
    """
    s = _check_spectrum(spectrum)
    n = s.size
    if not 1 <= k < n:
        raise ConfigError(f"need 1 <= k < n, got k={k}, n={n}")
    lhs = math.sqrt((n - k) * float(np.sum(s[k:])))
    rhs = float(np.sum(np.sqrt(s)))
    if rhs <= 0.0:
        return FastDecayCheck(holds=True, lhs=lhs, rhs=rhs, margin=0.0)
    return FastDecayCheck(holds=lhs <= constant * rhs, lhs=lhs, rhs=rhs,
                          margin=(constant * rhs - lhs) / rhs)


def trace_inverse_minimizer(c) -> tuple[np.ndarray, float]:
    """Minimize tr(M^{-1} C) over SPD M with tr M <= 1.

    The minimum (tr C^{1/2})^2 is attained by M* = C^{1/2} / tr(C^{1/2});
    returned as (M*, minimum). Eigenvalues of C are floored at
    1e-12 * lambda_max so nearly singular inputs stay usable.
    """
    c = check_matrix(c, "C")
    e = sym_eig(c)
    lmax = e.values[0]
    if lmax <= 0.0:
        raise LinalgError("trace_inverse_minimizer: C is singular after flooring")
    lam = np.maximum(e.values, 1e-12 * lmax)
    root = np.sqrt(lam)
    total = float(np.sum(root))
    m_star = (e.vectors * (root / total)) @ e.vectors.T
    return 0.5 * (m_star + m_star.T), total ** 2


@dataclass
class BoundReport:
    """Evaluated theoretical quantities for one spectrum."""

    n: int
    sigma: float
    rho: float
    iterations: int
    k: int | None
    trace_c: float
    trace_sqrt_c: float
    identity_bound: float           # general bound at A = I
    full_bound: float               # bound at A = C^{1/2}
    lowrank_bound: float | None
    exact_lowrank_bound: float | None
    fast_decay: FastDecayCheck | None
    iteration_ratio: float | None
    note: str = SIGMA_NOTE

    def to_json_dict(self) -> dict:
        out = {
            "n": self.n, "sigma": self.sigma, "rho": self.rho,
            "iterations": self.iterations, "k": self.k,
            "trace_c": self.trace_c, "trace_sqrt_c": self.trace_sqrt_c,
            "identity_bound": self.identity_bound, "full_bound": self.full_bound,
            "lowrank_bound": self.lowrank_bound,
            "exact_lowrank_bound": self.exact_lowrank_bound,
            "iteration_ratio": self.iteration_ratio,
            "note": self.note,
        }
        if self.fast_decay is not None:
            out["fast_decay"] = {
                "holds": self.fast_decay.holds, "lhs": self.fast_decay.lhs,
                "rhs": self.fast_decay.rhs, "margin": self.fast_decay.margin,
            }
        else:
            out["fast_decay"] = None
        return out


def bound_report(inputs: BoundInputs, delta_gram_trace_norm: float | None = None,
                 delta_gram_spectral_norm: float | None = None) -> BoundReport:
    """Evaluate every bound that the given inputs allow."""
    s = inputs.spectrum
    trace_c = float(np.sum(s))
    trace_sqrt_c = float(np.sum(np.sqrt(s)))
    identity = conditioned_sgd_bound(inputs, trace_a=float(s.size), trace_ainv_c=trace_c)
    full = full_conditioner_bound(inputs)
    low = exact_low = decay = None
    if inputs.k is not None:
        head_sqrt = float(np.sum(np.sqrt(s[: inputs.k])))
        head = float(np.sum(s[: inputs.k]))
        low = lowrank_conditioner_bound(inputs, trace_b=head_sqrt,
                                        trace_binv_ctilde=head_sqrt, trace_ctilde=head)
        exact_low = exact_lowrank_bound(inputs)
        decay = fast_decay_check(s, inputs.k)
    ratio = None
    if delta_gram_trace_norm is not None and delta_gram_spectral_norm is not None:
        ratio = iteration_ratio(delta_gram_trace_norm, delta_gram_spectral_norm,
                                trace_c, trace_sqrt_c)
    return BoundReport(
        n=s.size, sigma=inputs.sigma, rho=inputs.rho, iterations=inputs.iterations,
        k=inputs.k, trace_c=trace_c, trace_sqrt_c=trace_sqrt_c,
        identity_bound=identity, full_bound=full, lowrank_bound=low,
        exact_lowrank_bound=exact_low, fast_decay=decay, iteration_ratio=ratio,
    )
