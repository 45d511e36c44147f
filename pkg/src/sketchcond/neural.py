"""A two-affine-layer ReLU network whose first layer can be trained with
an adaptive input conditioner.

Backpropagation through an affine layer yields a gradient of the form
delta x^T, so the conditioned update W <- W - eta delta (A^{-1} x)^T drops
in wherever plain SGD would apply delta x^T. Since the layer inputs drift
during training, the second moment is tracked as an exponential moving
average C <- (1 - nu) C + nu x x^T (initialized at the identity) and the
conditioner is rebuilt from it every ``conditioner_refresh_every`` steps.
Only the first layer's weight matrix is conditioned; biases and the
second layer take the ordinary (momentum) SGD step.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import rng
from .conditioner import Conditioner, IdentityConditioner
from .data import Dataset
from .errors import ConfigError, DivergenceError
from .losses import LossModel, batch_loss_grads, batch_loss_values
from .optimizer import (Checkpoint, TrainConfig, TrainState, TrainTrace, _build_refresh,
                        _update_index_hash, ema_update, step_size)

# substream labels for the counter RNG
_INIT_STREAM = 0x1E71
_NET_INDEX_STREAM = 0x9D21


@dataclass
class TinyNet:
    w1: np.ndarray  # h x n
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # p x h
    b2: np.ndarray  # (p,)

    @property
    def dims(self) -> tuple[int, int, int]:
        h, n = self.w1.shape
        return n, h, self.w2.shape[0]


def init_tiny_net(n: int, hidden: int, p: int, seed: int = 0) -> TinyNet:
    """Uniform init on [-a, a] with a = sqrt(3 / fan_in); zero biases."""
    s = rng.split(seed, _INIT_STREAM)
    a1 = math.sqrt(3.0 / n)
    a2 = math.sqrt(3.0 / hidden)
    w1 = (rng.uniform_matrix(rng.split(s, 1), hidden, n) * 2.0 - 1.0) * a1
    w2 = (rng.uniform_matrix(rng.split(s, 2), p, hidden) * 2.0 - 1.0) * a2
    return TinyNet(w1=w1, b1=np.zeros(hidden), w2=w2, b2=np.zeros(p))


@dataclass
class ForwardCache:
    x: np.ndarray           # n x b inputs
    pre_hidden: np.ndarray  # h x b
    hidden: np.ndarray      # h x b post-ReLU
    scores: np.ndarray      # p x b


@dataclass
class Gradients:
    g_w1: np.ndarray
    g_b1: np.ndarray
    g_w2: np.ndarray
    g_b2: np.ndarray
    delta: np.ndarray   # h x b pre-activation gradients; g_w1 = delta x^T / b
    x: np.ndarray       # the inputs the deltas pair with


def forward(net: TinyNet, x) -> tuple[np.ndarray, ForwardCache]:
    """Scores W2 relu(W1 x + b1) + b2; accepts a vector or an n x b batch."""
    xa = np.asarray(x, dtype=np.float64)
    single = xa.ndim == 1
    xb = xa[:, None] if single else xa
    if xb.shape[0] != net.w1.shape[1]:
        raise ConfigError(f"input dimension {xb.shape[0]} != {net.w1.shape[1]}")
    pre = net.w1 @ xb + net.b1[:, None]
    hid = np.maximum(pre, 0.0)
    scores = net.w2 @ hid + net.b2[:, None]
    cache = ForwardCache(x=xb, pre_hidden=pre, hidden=hid, scores=scores)
    return (scores[:, 0] if single else scores), cache


def backward(net: TinyNet, cache: ForwardCache, labels, model: LossModel) -> Gradients:
    """Exact gradients of the mean loss over the cached batch."""
    yb = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    b = cache.x.shape[1]
    if yb.shape[0] != b:
        raise ConfigError(f"cache holds {b} examples but got {yb.shape[0]} labels")
    g_scores = batch_loss_grads(model, cache.scores, yb)        # p x b
    g_w2 = g_scores @ cache.hidden.T / b
    g_b2 = g_scores.sum(axis=1) / b
    delta = (net.w2.T @ g_scores) * (cache.pre_hidden > 0.0)    # h x b
    g_w1 = delta @ cache.x.T / b
    g_b1 = delta.sum(axis=1) / b
    return Gradients(g_w1=g_w1, g_b1=g_b1, g_w2=g_w2, g_b2=g_b2, delta=delta, x=cache.x)


def _net_eval(net: TinyNet, model: LossModel, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    scores, _ = forward(net, x)
    losses = batch_loss_values(model, scores, y)
    err = float(np.mean(np.argmax(scores, axis=0) != y))
    return float(np.mean(losses)), err


def adaptive_train(data: Dataset, net: TinyNet, cfg: TrainConfig,
                   conditioner: Conditioner | None = None,
                   model: LossModel | None = None,
                   eval_data: Dataset | None = None) -> tuple[TinyNet, TrainTrace]:
    """Train the net; the first layer's update goes through the conditioner.

    With ``cfg.conditioner_refresh_every > 0`` the EMA second moment of
    the raw inputs is updated from every example before its step and the
    conditioner is rebuilt at each refresh boundary. With refresh
    disabled and an identity conditioner this reduces exactly to plain
    SGD on all parameters.
    """
    cfg.validate()
    if model is None:
        model = LossModel(num_classes=data.num_classes)
    n, h, p = net.dims
    if conditioner is None:
        conditioner = IdentityConditioner(dim=n)

    # piggyback on the linear trainer's state for the EMA / refresh bookkeeping
    ema_state = TrainState(w=np.zeros((p, n)), w_sum=np.zeros((p, n)), velocity=None,
                           ema_c=np.eye(n) if cfg.conditioner_refresh_every > 0 else None)
    vel = {"w1": None, "b1": None, "w2": None, "b2": None}
    trace = TrainTrace()
    indices = rng.integers(rng.split(cfg.seed, _NET_INDEX_STREAM),
                           cfg.iterations * cfg.batch_size, data.m)
    current = conditioner
    rho = model.lipschitz_rho
    start = time.perf_counter()

    def momentum_step(key: str, grad: np.ndarray) -> np.ndarray:
        if cfg.momentum <= 0.0:
            return grad
        if vel[key] is None:
            vel[key] = np.zeros_like(grad)
        vel[key] = cfg.momentum * vel[key] + grad
        return grad + cfg.momentum * vel[key]

    for step_i in range(cfg.iterations):
        lo = step_i * cfg.batch_size
        idx = indices[lo:lo + cfg.batch_size]
        ema_state.index_hash = _update_index_hash(ema_state.index_hash, idx)
        xb = data.x[:, idx]
        yb = data.y[idx]

        if cfg.conditioner_refresh_every > 0:
            for j in range(xb.shape[1]):
                ema_state.ema_c = ema_update(ema_state.ema_c, xb[:, j], cfg.ema_nu)
            if cfg.refresh_mode == "sketched":
                ema_state.recent_inputs.extend(xb[:, j].copy() for j in range(xb.shape[1]))
                del ema_state.recent_inputs[:-cfg.refresh_buffer]

        scores, cache = forward(net, xb)
        if not np.all(np.isfinite(scores)):
            trace.diverged = True
            trace.divergence_iteration = step_i
            raise DivergenceError(step_i, state=net, trace=trace)
        grads = backward(net, cache, yb, model)

        v = current.apply_inverse(xb)
        g_w1_cond = grads.delta @ v.T / xb.shape[1]

        eta = step_size(cfg, rho, step_i)
        net.w1 = net.w1 - eta * momentum_step("w1", g_w1_cond)
        net.b1 = net.b1 - eta * momentum_step("b1", grads.g_b1)
        net.w2 = net.w2 - eta * momentum_step("w2", grads.g_w2)
        net.b2 = net.b2 - eta * momentum_step("b2", grads.g_b2)
        ema_state.t = step_i + 1

        if cfg.conditioner_refresh_every > 0 and ema_state.t % cfg.conditioner_refresh_every == 0:
            current = _build_refresh(ema_state, cfg)
            if cfg.reset_velocity_on_refresh:
                vel = {key: None for key in vel}

        t = step_i + 1
        if t % cfg.checkpoint_every == 0 or t == cfg.iterations:
            if trace.checkpoints and trace.checkpoints[-1].iteration == t:
                continue
            train_loss, train_err = _net_eval(net, model, data.x, data.y)
            if not math.isfinite(train_loss):
                trace.diverged = True
                trace.divergence_iteration = t
                raise DivergenceError(t, state=net, trace=trace)
            eval_loss = eval_err = None
            if eval_data is not None:
                eval_loss, eval_err = _net_eval(net, model, eval_data.x, eval_data.y)
            trace.checkpoints.append(Checkpoint(
                iteration=t, train_loss=train_loss, train_error01=train_err,
                eval_loss=eval_loss, eval_error01=eval_err,
                wall_ms=(time.perf_counter() - start) * 1e3,
            ))

    return net, trace
