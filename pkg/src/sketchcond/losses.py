"""Convex per-example losses on score vectors.

Currently one family: multiclass logistic loss
    loss(a; y) = log sum_j exp(a_j - a_y)
with gradient softmax(a) - e_y. The gradient norm is bounded by sqrt(2)
for every number of classes, which is the Lipschitz constant used by the
step-size rule of the conditioned trainer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

MULTICLASS_LOGISTIC = "multiclass_logistic"


@dataclass(frozen=True)
class LossModel:
    num_classes: int
    kind: str = MULTICLASS_LOGISTIC

    def __post_init__(self):
        if self.kind != MULTICLASS_LOGISTIC:
            raise ConfigError(f"unknown loss kind {self.kind!r}")
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")

    @property
    def lipschitz_rho(self) -> float:
        # sup_a ||softmax(a) - e_y||_2, attained in the limit, for any p
        return math.sqrt(2.0)


def lipschitz_constant(model: LossModel) -> float:
    return model.lipschitz_rho


def _check_label(model: LossModel, label: int) -> int:
    label = int(label)
    if not 0 <= label < model.num_classes:
        raise ConfigError(f"label {label} out of range [0, {model.num_classes})")
    return label


def loss_value(model: LossModel, scores, label: int) -> float:
    """log sum_j exp(a_j - a_y), computed with max-subtraction."""
    a = np.asarray(scores, dtype=np.float64)
    label = _check_label(model, label)
    shifted = a - a.max()
    return float(np.log(np.sum(np.exp(shifted))) - shifted[label])


def loss_grad(model: LossModel, scores, label: int) -> np.ndarray:
    """softmax(a) - e_y; components sum to zero up to round-off."""
    a = np.asarray(scores, dtype=np.float64)
    label = _check_label(model, label)
    e = np.exp(a - a.max())
    g = e / e.sum()
    g[label] -= 1.0
    return g


def batch_loss_values(model: LossModel, scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-example losses for a p x b score matrix (columns are examples)."""
    shifted = scores - scores.max(axis=0)
    lse = np.log(np.sum(np.exp(shifted), axis=0))
    cols = np.arange(scores.shape[1])
    return lse - shifted[labels, cols]


def batch_loss_grads(model: LossModel, scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-example gradients as a p x b matrix."""
    e = np.exp(scores - scores.max(axis=0))
    g = e / e.sum(axis=0)
    g[labels, np.arange(scores.shape[1])] -= 1.0
    return g


def dataset_eval(model: LossModel, w: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """(mean loss, zero-one error) of score matrix W X over a dataset."""
    scores = w @ x
    losses = batch_loss_values(model, scores, y)
    err = float(np.mean(np.argmax(scores, axis=0) != y))
    return float(np.mean(losses)), err
