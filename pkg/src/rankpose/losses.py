"""Paired regression and pairwise ranking losses.

Training works on pairs of same-identity samples. Two terms are combined:

- a paired MSE term, ``(1/N) * sum_i (||t1_i - y1_i||^2 + ||t2_i - y2_i||^2)``,
  which anchors predictions to the labels, and
- a pairwise ranking hinge, charged per angle whenever the predicted
  ordering of the two pair members contradicts the ground-truth ordering:
  ``(1/N) * sum_i sum_d max(0, -sgn(t2_i^d - t1_i^d) * (y2_i^d - y1_i^d))``.
  Tied labels (sgn = 0) contribute nothing.

The two are mixed as ``beta * mse + (1 - beta) * ranking``. Units are
radians (squared radians for the MSE term); the mixing weight applies to
the heterogeneous units as-is.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyBatch, InvalidConfig
from .poses import as_pose_array


@dataclass
class PairPrediction:
    """Predictions and ground truths for the two samples of one pair.

    ``y1``/``y2`` are the model outputs, ``t1``/``t2`` the labels; each is a
    3-vector (yaw, pitch, roll) or a :class:`~rankpose.poses.PoseAngles`.
    """

    y1: object
    y2: object
    t1: object
    t2: object


@dataclass
class LossConfig:
    """Mixing weight between the MSE and ranking terms."""

    beta: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidConfig(f"beta must lie in [0, 1], got {self.beta}")


@dataclass
class LossBreakdown:
    """Loss values reported separately and combined."""

    mse: float
    ranking: float
    combined: float


def _stack_batch(batch: Sequence[PairPrediction]):
    if len(batch) == 0:
        raise EmptyBatch("loss evaluated on an empty batch")
    y1 = np.stack([as_pose_array(p.y1) for p in batch])
    y2 = np.stack([as_pose_array(p.y2) for p in batch])
    t1 = np.stack([as_pose_array(p.t1) for p in batch])
    t2 = np.stack([as_pose_array(p.t2) for p in batch])
    return y1, y2, t1, t2


def _check_pair_arrays(y1, y2, t1, t2):
    if not (y1.shape == y2.shape == t1.shape == t2.shape) or y1.ndim != 2 or y1.shape[1] != 3:
        raise DimensionMismatch(
            f"pair arrays must share shape (N, 3); got {y1.shape}, {y2.shape}, {t1.shape}, {t2.shape}"
        )
    if y1.shape[0] == 0:
        raise EmptyBatch("loss evaluated on an empty batch")


def mse_loss_arrays(y1, y2, t1, t2) -> float:
    """Paired MSE on stacked (N, 3) arrays."""
    y1, y2, t1, t2 = (np.asarray(a, dtype=np.float64) for a in (y1, y2, t1, t2))
    _check_pair_arrays(y1, y2, t1, t2)
    per_pair = np.sum((t1 - y1) ** 2, axis=1) + np.sum((t2 - y2) ** 2, axis=1)
    return float(np.mean(per_pair))


def ranking_terms(y1, y2, t1, t2) -> np.ndarray:
    """Per-pair, per-angle hinge terms of the ranking loss, shape (N, 3).

    Term (i, d) is ``max(0, -sgn(t2 - t1) * (y2 - y1))`` evaluated at
    dimension d of pair i; zero wherever the labels are tied.
    """
    y1, y2, t1, t2 = (np.asarray(a, dtype=np.float64) for a in (y1, y2, t1, t2))
    _check_pair_arrays(y1, y2, t1, t2)
    sign = np.sign(t2 - t1)
    return np.maximum(0.0, -sign * (y2 - y1))


def ranking_loss_arrays(y1, y2, t1, t2) -> float:
    """Pairwise ranking loss on stacked (N, 3) arrays."""
    return float(np.mean(np.sum(ranking_terms(y1, y2, t1, t2), axis=1)))


def mse_loss(batch: Sequence[PairPrediction]) -> float:
    """Paired MSE over a batch; always >= 0, zero iff predictions match labels."""
    return mse_loss_arrays(*_stack_batch(batch))


def ranking_loss(batch: Sequence[PairPrediction]) -> float:
    """Pairwise ranking loss over a batch; zero iff every untied ordering agrees."""
    return ranking_loss_arrays(*_stack_batch(batch))


def combined_loss_arrays(y1, y2, t1, t2, cfg: LossConfig) -> LossBreakdown:
    mse = mse_loss_arrays(y1, y2, t1, t2)
    ranking = ranking_loss_arrays(y1, y2, t1, t2)
    combined = cfg.beta * mse + (1.0 - cfg.beta) * ranking
    return LossBreakdown(mse=mse, ranking=ranking, combined=combined)


def combined_loss(batch: Sequence[PairPrediction], cfg: LossConfig) -> LossBreakdown:
    """Evaluate both terms and their beta-weighted combination."""
    return combined_loss_arrays(*_stack_batch(batch), cfg)


def loss_backward_arrays(y1, y2, t1, t2, cfg: LossConfig):
    """Gradients of the combined loss w.r.t. the predictions.

    Returns ``(grad_y1, grad_y2)``, each (N, 3). The MSE term contributes
    ``beta * (2/N) * (y - t)`` per prediction; the ranking term contributes
    ``+-(1 - beta)/N`` on dimensions with a strictly violated ordering and
    zero on inactive, tied, or exactly-boundary dimensions.
    """
    y1, y2, t1, t2 = (np.asarray(a, dtype=np.float64) for a in (y1, y2, t1, t2))
    _check_pair_arrays(y1, y2, t1, t2)
    n = y1.shape[0]

    grad_y1 = cfg.beta * (2.0 / n) * (y1 - t1)
    grad_y2 = cfg.beta * (2.0 / n) * (y2 - t2)

    if cfg.beta < 1.0:
        sign = np.sign(t2 - t1)
        active = (-sign * (y2 - y1)) > 0.0
        hinge = np.where(active, sign, 0.0) * ((1.0 - cfg.beta) / n)
        grad_y1 = grad_y1 + hinge
        grad_y2 = grad_y2 - hinge
    return grad_y1, grad_y2


def loss_backward(batch: Sequence[PairPrediction], cfg: LossConfig):
    """Per-prediction gradients of the combined loss over a batch."""
    return loss_backward_arrays(*_stack_batch(batch), cfg)
