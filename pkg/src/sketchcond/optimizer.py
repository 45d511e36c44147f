"""Conditioned stochastic gradient descent for linear multiclass models.

The update for one example (x, y) with conditioner A and step eta is

    W <- W - eta * grad_loss(W x; y) (A^{-1} x)^T,

i.e. the inverse conditioner is applied to the input before the rank-one
update, so the cost per step is O(n (p + k)) for a rank-k conditioner and
the gradient outer product is never formed ahead of the A^{-1} pass.
Mini-batches average the per-example updates; optional Nesterov-style
momentum acts on the conditioned gradient.

The trainer starts from W = 0, samples example indices i.i.d. uniformly
via the counter RNG (so equal seeds give identical index sequences), and
maintains the running average of the visited iterates, which is what the
theoretical bounds speak about.

For non-stationary inputs an exponential moving average of the second
moment can be tracked and the conditioner rebuilt every
``conditioner_refresh_every`` steps, either synchronously or on a
background thread that publishes finished conditioners for the trainer
to swap in between iterations.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .conditioner import Conditioner, build_full
from .data import Dataset
from .errors import ConfigError, DivergenceError, RankDeficiencyError
from .losses import LossModel, batch_loss_grads, dataset_eval
from .sketch import SketchConfig, sketched_preprocessing

# substream labels for the counter RNG
_INDEX_STREAM = 0x1D10
_FNV_PRIME = 0x100000001B3
_FNV_OFFSET = 0xCBF29CE484222325
_U64 = (1 << 64) - 1

STEP_MODES = ("fixed", "theory", "schedule")
REFRESH_MODES = ("full", "sketched")


@dataclass
class TrainConfig:
    iterations: int
    step_size_mode: str = "fixed"
    eta: float = 0.01            # fixed mode
    sigma: float = 1.0           # theory mode: eta = sigma / (rho sqrt(T))
    eta0: float = 0.01           # schedule mode: eta0 (1 + gamma t)^-power
    gamma: float = 1e-4
    power: float = 0.75
    batch_size: int = 1
    momentum: float = 0.0
    seed: int = 0
    checkpoint_every: int = 100
    conditioner_refresh_every: int = 0   # 0 disables EMA tracking entirely
    ema_nu: float = 0.01
    refresh_mode: str = "full"
    refresh_rank: int = 8
    refresh_buffer: int = 256            # recent inputs kept for sketched refresh
    reset_velocity_on_refresh: bool = False
    async_refresh: bool = False

    def validate(self) -> None:
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.step_size_mode not in STEP_MODES:
            raise ConfigError(f"unknown step size mode {self.step_size_mode!r}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.checkpoint_every < 1:
            raise ConfigError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        if self.conditioner_refresh_every < 0:
            raise ConfigError("conditioner_refresh_every must be >= 0")
        if not 0.0 < self.ema_nu <= 1.0:
            raise ConfigError(f"ema_nu must lie in (0, 1], got {self.ema_nu}")
        if self.refresh_mode not in REFRESH_MODES:
            raise ConfigError(f"unknown refresh mode {self.refresh_mode!r}")


@dataclass
class TrainState:
    w: np.ndarray                      # p x n current iterate
    w_sum: np.ndarray                  # sum of visited iterates W_1..W_t
    velocity: np.ndarray | None
    t: int = 0
    ema_c: np.ndarray | None = None
    index_hash: int = _FNV_OFFSET      # FNV-1a over the consumed example indices
    recent_inputs: list = field(default_factory=list)

    @property
    def w_avg(self) -> np.ndarray:
        """(1/t) sum of the iterates at which gradients were evaluated."""
        return self.w_sum / max(self.t, 1)


@dataclass
class Checkpoint:
    iteration: int
    train_loss: float
    train_error01: float
    eval_loss: float | None
    eval_error01: float | None
    wall_ms: float


@dataclass
class TrainTrace:
    checkpoints: list[Checkpoint] = field(default_factory=list)
    diverged: bool = False
    divergence_iteration: int | None = None


def step_size(cfg: TrainConfig, rho: float, t: int) -> float:
    """Learning rate for the step leaving iterate t (t = completed steps)."""
    if cfg.step_size_mode == "fixed":
        return cfg.eta
    if cfg.step_size_mode == "theory":
        return cfg.sigma / (rho * math.sqrt(cfg.iterations))
    return cfg.eta0 * (1.0 + cfg.gamma * t) ** (-cfg.power)


def ema_update(ema_c: np.ndarray, x: np.ndarray, nu: float) -> np.ndarray:
    """C <- (1 - nu) C + nu x x^T, re-symmetrized; PSD is preserved."""
    if not 0.0 < nu <= 1.0:
        raise ConfigError(f"nu must lie in (0, 1], got {nu}")
    c = (1.0 - nu) * ema_c + nu * np.outer(x, x)
    return 0.5 * (c + c.T)


def conditioned_step(state: TrainState, x_batch: np.ndarray, y_batch: np.ndarray,
                     cond: Conditioner, eta: float, model: LossModel,
                     momentum: float = 0.0) -> TrainState:
    """One mini-batch update; mutates and returns the state.

    The batch gradient is the mean of grad_loss(W x_i; y_i) (A^{-1} x_i)^T
    over the batch. The running iterate sum picks up the pre-update W, so
    after T steps it covers exactly the iterates the gradients saw.
    """
    xb = np.asarray(x_batch, dtype=np.float64)
    if xb.ndim == 1:
        xb = xb[:, None]
    yb = np.atleast_1d(np.asarray(y_batch, dtype=np.int64))
    b = xb.shape[1]
    if yb.shape[0] != b:
        raise ConfigError(f"batch has {b} examples but {yb.shape[0]} labels")
    if state.w.shape[1] != xb.shape[0]:
        raise ConfigError(f"weights expect dimension {state.w.shape[1]}, got {xb.shape[0]}")

    scores = state.w @ xb
    if not np.all(np.isfinite(scores)):
        raise DivergenceError(state.t)
    g = batch_loss_grads(model, scores, yb)
    v = cond.apply_inverse(xb)
    grad = g @ v.T / b

    state.w_sum += state.w
    if momentum > 0.0:
        if state.velocity is None:
            state.velocity = np.zeros_like(state.w)
        state.velocity = momentum * state.velocity + grad
        grad = grad + momentum * state.velocity
    state.w = state.w - eta * grad
    state.t += 1
    return state


def _update_index_hash(h: int, indices: np.ndarray) -> int:
    for i in indices:
        h = ((h ^ (int(i) + 1)) * _FNV_PRIME) & _U64
    return h


def maybe_refresh(state: TrainState, cfg: TrainConfig) -> Conditioner | None:
    """New conditioner from the EMA second moment at refresh boundaries."""
    if cfg.conditioner_refresh_every <= 0 or state.t == 0:
        return None
    if state.t % cfg.conditioner_refresh_every != 0:
        return None
    return _build_refresh(state, cfg)


def _build_refresh(state: TrainState, cfg: TrainConfig) -> Conditioner:
    if cfg.refresh_mode == "sketched" and len(state.recent_inputs) > 2 * cfg.refresh_rank:
        buffer = np.stack(state.recent_inputs, axis=1)
        sk = SketchConfig(k=cfg.refresh_rank, seed=rng.split(cfg.seed, state.t))
        if sk.width <= buffer.shape[1] and cfg.refresh_rank < buffer.shape[0]:
            try:
                cond, _ = sketched_preprocessing(buffer, sk)
                return cond
            except RankDeficiencyError:
                pass  # degenerate buffer; the EMA build below always works
    return build_full(state.ema_c)


def train(data: Dataset, cond: Conditioner, cfg: TrainConfig,
          model: LossModel | None = None,
          eval_data: Dataset | None = None) -> tuple[TrainState, TrainTrace]:
    """Run conditioned SGD from W = 0 and return the final state and trace.

    Raises DivergenceError (with the partial state and trace attached)
    when a non-finite loss shows up.
    """
    cfg.validate()
    if data.m < 1:
        raise ConfigError("dataset is empty")
    if model is None:
        model = LossModel(num_classes=data.num_classes)
    rho = model.lipschitz_rho
    p, n = model.num_classes, data.n

    state = TrainState(
        w=np.zeros((p, n)), w_sum=np.zeros((p, n)), velocity=None,
        ema_c=np.eye(n) if cfg.conditioner_refresh_every > 0 else None,
    )
    trace = TrainTrace()
    indices = rng.integers(rng.split(cfg.seed, _INDEX_STREAM),
                           cfg.iterations * cfg.batch_size, data.m)
    current = cond
    executor: ThreadPoolExecutor | None = None
    pending: Future | None = None
    if cfg.async_refresh and cfg.conditioner_refresh_every > 0:
        executor = ThreadPoolExecutor(max_workers=1)

    start = time.perf_counter()
    try:
        for step_i in range(cfg.iterations):
            lo = step_i * cfg.batch_size
            idx = indices[lo:lo + cfg.batch_size]
            state.index_hash = _update_index_hash(state.index_hash, idx)
            xb = data.x[:, idx]
            yb = data.y[idx]

            if cfg.conditioner_refresh_every > 0:
                for j in range(xb.shape[1]):
                    state.ema_c = ema_update(state.ema_c, xb[:, j], cfg.ema_nu)
                if cfg.refresh_mode == "sketched":
                    state.recent_inputs.extend(xb[:, j].copy() for j in range(xb.shape[1]))
                    del state.recent_inputs[:-cfg.refresh_buffer]

            if pending is not None and pending.done():
                current = pending.result()
                pending = None
                if cfg.reset_velocity_on_refresh:
                    state.velocity = None

            eta = step_size(cfg, rho, state.t)
            try:
                conditioned_step(state, xb, yb, current, eta, model, cfg.momentum)
            except DivergenceError as err:
                trace.diverged = True
                trace.divergence_iteration = err.iteration
                raise DivergenceError(err.iteration, state=state, trace=trace) from None

            if cfg.conditioner_refresh_every > 0 and state.t % cfg.conditioner_refresh_every == 0:
                if executor is not None:
                    if pending is None:
                        snapshot = TrainState(w=state.w, w_sum=state.w_sum, velocity=None,
                                              t=state.t, ema_c=state.ema_c.copy(),
                                              recent_inputs=list(state.recent_inputs))
                        pending = executor.submit(_build_refresh, snapshot, cfg)
                else:
                    current = _build_refresh(state, cfg)
                    if cfg.reset_velocity_on_refresh:
                        state.velocity = None

            if state.t % cfg.checkpoint_every == 0 or state.t == cfg.iterations:
                _append_checkpoint(trace, state, data, eval_data, model, start)
    finally:
        if executor is not None:
            executor.shutdown(wait=False, cancel_futures=True)

    return state, trace


def _append_checkpoint(trace: TrainTrace, state: TrainState, data: Dataset,
                       eval_data: Dataset | None, model: LossModel, start: float) -> None:
    if trace.checkpoints and trace.checkpoints[-1].iteration == state.t:
        return
    train_loss, train_err = dataset_eval(model, state.w, data.x, data.y)
    if not math.isfinite(train_loss):
        trace.diverged = True
        trace.divergence_iteration = state.t
        raise DivergenceError(state.t, state=state, trace=trace)
    eval_loss = eval_err = None
    if eval_data is not None:
        eval_loss, eval_err = dataset_eval(model, state.w, eval_data.x, eval_data.y)
    trace.checkpoints.append(Checkpoint(
        iteration=state.t, train_loss=train_loss, train_error01=train_err,
        eval_loss=eval_loss, eval_error01=eval_err,
        wall_ms=(time.perf_counter() - start) * 1e3,
    ))


# ---------------------------------------------------------------------------
# trace persistence: CSV with a fixed header, floats at 17 significant digits
# ---------------------------------------------------------------------------

TRACE_HEADER = ["iter", "train_loss", "train_err01", "eval_loss", "eval_err01", "wall_ms"]


def _fmt(v: float | None) -> str:
    return "" if v is None else format(v, ".17g")


def write_trace_csv(trace: TrainTrace, path) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for c in trace.checkpoints:
            writer.writerow([c.iteration, _fmt(c.train_loss), _fmt(c.train_error01),
                             _fmt(c.eval_loss), _fmt(c.eval_error01), _fmt(c.wall_ms)])


def read_trace_csv(path) -> TrainTrace:
    trace = TrainTrace()
    with open(path, "r", newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRACE_HEADER:
            raise ConfigError(f"{path}: unexpected trace header {header}")
        for row in reader:
            trace.checkpoints.append(Checkpoint(
                iteration=int(row[0]),
                train_loss=float(row[1]),
                train_error01=float(row[2]),
                eval_loss=float(row[3]) if row[3] else None,
                eval_error01=float(row[4]) if row[4] else None,
                wall_ms=float(row[5]),
            ))
    return trace
