"""Conditioned SGD with full and sketched low-rank preconditioners.

The library trains linear multiclass models (and a small ReLU network)
with updates of the form W <- W - eta g (A^{-1} x)^T, where the
conditioner A is either the identity, the square root of the data second
moment, or a low-rank surrogate built by randomized sketching. Companion
calculators evaluate the closed-form convergence bounds that motivate
each choice.
"""

from .bounds import (BoundInputs, BoundReport, bound_report, conditioned_sgd_bound,
                     exact_lowrank_bound, fast_decay_check, full_conditioner_bound,
                     iteration_ratio, lowrank_conditioner_bound, trace_inverse_minimizer)
from .conditioner import (Conditioner, FullConditioner, IdentityConditioner,
                          LowRankConditioner, build_exact_lowrank, build_full,
                          build_identity, load_conditioner, residual_scale,
                          save_conditioner)
from .data import Dataset, SyntheticSpec, generate_synthetic, load_csv, save_csv
from .errors import (ConfigError, DataError, DivergenceError, LinalgError,
                     RankDeficiencyError, SketchcondError)
from .harness import ArmSpec, ComparisonReport, compare
from .linalg import (SymEig, ThinSvd, norms, psd_sqrt_pair, qr_orthonormal,
                     second_moment, sym_eig, thin_svd)
from .losses import LossModel, lipschitz_constant, loss_grad, loss_value
from .neural import TinyNet, adaptive_train, backward, forward, init_tiny_net
from .optimizer import (TrainConfig, TrainState, TrainTrace, conditioned_step,
                        ema_update, maybe_refresh, read_trace_csv, train,
                        write_trace_csv)
from .sketch import (SketchConfig, SketchReport, random_sketch,
                     randomized_range_finder, sketched_preprocessing)

__version__ = "0.1.0"

__all__ = [
    "ArmSpec", "BoundInputs", "BoundReport", "ComparisonReport", "Conditioner",
    "ConfigError", "DataError", "Dataset", "DivergenceError", "FullConditioner",
    "IdentityConditioner", "LinalgError", "LossModel", "LowRankConditioner",
    "RankDeficiencyError", "SketchConfig", "SketchReport", "SketchcondError",
    "SymEig", "SyntheticSpec", "ThinSvd", "TinyNet", "TrainConfig", "TrainState",
    "TrainTrace", "adaptive_train", "backward", "bound_report", "build_exact_lowrank",
    "build_full", "build_identity", "compare", "conditioned_sgd_bound",
    "conditioned_step", "ema_update", "exact_lowrank_bound", "fast_decay_check",
    "forward", "full_conditioner_bound", "generate_synthetic", "init_tiny_net",
    "iteration_ratio", "lipschitz_constant", "load_conditioner", "load_csv",
    "loss_grad", "loss_value", "lowrank_conditioner_bound", "maybe_refresh",
    "norms", "psd_sqrt_pair", "qr_orthonormal", "random_sketch",
    "randomized_range_finder", "read_trace_csv", "residual_scale", "save_conditioner",
    "save_csv", "second_moment", "sketched_preprocessing", "sym_eig", "thin_svd",
    "trace_inverse_minimizer", "train", "write_trace_csv",
]
