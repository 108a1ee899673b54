"""Siamese training loop.

Both members of every pair pass through one shared parameter set (the
sharing is exact, not a copy); the combined loss couples their
predictions and the gradients of both members accumulate before each
Adam step. The learning rate follows cosine decay over the whole run,
stepped per optimizer step.

Pair sampling draws from a per-epoch substream of the run seed, so a
run is bit-reproducible from its config and can be resumed exactly
from any epoch boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .data import Dataset, batches_per_epoch, sample_pairs
from .errors import CheckpointMismatch, DimensionMismatch, InvalidConfig, NonFiniteLoss
from .heads import OutputHead, head_backward_batch, head_forward_batch, init_head
from .losses import LossConfig, combined_loss_arrays, loss_backward_arrays
from .network import (
    BackboneConfig,
    BackboneParams,
    backbone_backward_batch,
    backbone_forward_batch,
    init_backbone,
    params_as_list,
    params_from_list,
)
from .optim import AdamConfig, AdamState, adam_step, cosine_lr
from .poses import PoseAngles
from .rng import named_rng

HISTORY_HEADER = "# rankpose-history v1"


@dataclass
class TrainConfig:
    """Everything a run needs besides the datasets.

    ``adam.total_steps`` is recomputed from the dataset size; ``backbone.seed``
    is overridden by ``seed`` so one value reproduces the whole run. The
    image-scale protocol would use 80 epochs and 128-pair batches; the
    desk-scale defaults below train in seconds.
    """

    epochs: int = 30
    batch_pairs: int = 32
    head_kind: str = "arccos"
    loss: LossConfig = field(default_factory=LossConfig)
    adam: AdamConfig = field(default_factory=AdamConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidConfig(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_pairs < 1:
            raise InvalidConfig(f"batch_pairs must be >= 1, got {self.batch_pairs}")
        if self.eval_every < 1:
            raise InvalidConfig(f"eval_every must be >= 1, got {self.eval_every}")


@dataclass
class TrainState:
    """Parameters plus optimizer state; owned by exactly one training loop."""

    config: TrainConfig
    backbone_config: BackboneConfig
    params: BackboneParams
    head: OutputHead
    adam_config: AdamConfig
    adam_state: AdamState
    step: int = 0
    epochs_done: int = 0

    def flat_params(self) -> list:
        return params_as_list(self.params) + [self.head.weights]

    def set_flat_params(self, arrays: list) -> None:
        self.params = params_from_list(arrays[:-1], self.params.activation)
        self.head = replace(self.head, weights=arrays[-1])


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    mse: float
    ranking: float
    combined: float
    val_mae: Optional[tuple] = None  # (yaw, pitch, roll) in radians


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def final(self) -> EpochRecord:
        return self.records[-1]


def init_train_state(cfg: TrainConfig, train_set: Dataset) -> TrainState:
    """Fresh parameters and optimizer buffers for a run on ``train_set``."""
    if cfg.backbone.input_dim != train_set.input_dim:
        raise DimensionMismatch(
            f"backbone input_dim {cfg.backbone.input_dim} != dataset dim {train_set.input_dim}"
        )
    backbone_cfg = replace(cfg.backbone, seed=cfg.seed)
    params = init_backbone(backbone_cfg)
    head = init_head(cfg.head_kind, backbone_cfg.feature_dim, cfg.seed)
    total_steps = cfg.epochs * batches_per_epoch(train_set, cfg.batch_pairs)
    adam_cfg = replace(cfg.adam, total_steps=total_steps)
    flat = params_as_list(params) + [head.weights]
    return TrainState(
        config=cfg,
        backbone_config=backbone_cfg,
        params=params,
        head=head,
        adam_config=adam_cfg,
        adam_state=AdamState.zeros_like(flat),
    )


def batch_loss_and_grads(params: BackboneParams, head: OutputHead, x1, x2, t1, t2, loss_cfg: LossConfig):
    """Loss and accumulated gradients for one Siamese batch.

    Both members go through the same ``params``/``head``; their gradient
    contributions are summed (the 1/N normalization lives in the loss).
    Returns ``(breakdown, grads)`` with ``grads`` aligned to
    ``params_as_list(params) + [head.weights]``.
    """
    f1, trace1 = backbone_forward_batch(params, x1)
    f2, trace2 = backbone_forward_batch(params, x2)
    y1 = head_forward_batch(head, f1, mode="train")
    y2 = head_forward_batch(head, f2, mode="train")
    breakdown = combined_loss_arrays(y1, y2, t1, t2, loss_cfg)
    g_y1, g_y2 = loss_backward_arrays(y1, y2, t1, t2, loss_cfg)
    head_grad1, g_f1 = head_backward_batch(head, f1, g_y1, mode="train")
    head_grad2, g_f2 = head_backward_batch(head, f2, g_y2, mode="train")
    backbone_grads1, _ = backbone_backward_batch(params, trace1, g_f1)
    backbone_grads2, _ = backbone_backward_batch(params, trace2, g_f2)
    grads = [a + b for a, b in zip(backbone_grads1.as_list(), backbone_grads2.as_list())]
    grads.append(head_grad1 + head_grad2)
    return breakdown, grads


def train(
    train_set: Dataset,
    val_set: Optional[Dataset],
    cfg: TrainConfig,
    initial_state: Optional[TrainState] = None,
):
    """Run (or resume) training; returns ``(TrainState, TrainHistory)``.

    With ``initial_state`` the loop continues from ``epochs_done + 1`` and
    reproduces exactly what an uninterrupted run would have done, because
    pair sampling for epoch ``e`` depends only on ``(seed, e)``.
    """
    if initial_state is None:
        state = init_train_state(cfg, train_set)
    else:
        state = initial_state
        if state.config != cfg:
            raise CheckpointMismatch("resume config differs from checkpointed config")
        if state.adam_config.total_steps != cfg.epochs * batches_per_epoch(train_set, cfg.batch_pairs):
            raise CheckpointMismatch("resume dataset size differs from checkpointed schedule")

    features = train_set.features_matrix()
    poses = train_set.pose_matrix()
    n_batches = batches_per_epoch(train_set, cfg.batch_pairs)
    history = TrainHistory()

    for epoch in range(state.epochs_done + 1, cfg.epochs + 1):
        pair_rng = named_rng(cfg.seed, "pairs", epoch)
        flat = state.flat_params()
        mse_sum = ranking_sum = combined_sum = 0.0
        lr_last = cosine_lr(state.adam_config, state.step)
        for batch_idx in range(n_batches):
            batch = sample_pairs(train_set, cfg.batch_pairs, pair_rng)
            i1, i2 = batch.pairs[:, 0], batch.pairs[:, 1]
            params = params_from_list(flat[:-1], state.params.activation)
            head = replace(state.head, weights=flat[-1])
            breakdown, grads = batch_loss_and_grads(
                params, head, features[i1], features[i2], poses[i1], poses[i2], cfg.loss
            )
            if not (
                math.isfinite(breakdown.mse)
                and math.isfinite(breakdown.ranking)
                and math.isfinite(breakdown.combined)
            ):
                raise NonFiniteLoss(
                    f"non-finite loss at epoch {epoch}, batch {batch_idx + 1}, "
                    f"optimizer step {state.step + 1}: mse={breakdown.mse}, "
                    f"ranking={breakdown.ranking}, combined={breakdown.combined}"
                )
            next_step = state.step + 1
            lr_last = cosine_lr(state.adam_config, next_step)
            state.adam_state, flat = adam_step(state.adam_state, flat, grads, state.adam_config, next_step)
            state.step = next_step
            mse_sum += breakdown.mse
            ranking_sum += breakdown.ranking
            combined_sum += breakdown.combined
        state.set_flat_params(flat)
        state.epochs_done = epoch

        val_mae = None
        if val_set is not None and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            predictions = predict_batch(state, val_set.features_matrix())
            errors = np.abs(predictions - val_set.pose_matrix())
            val_mae = tuple(float(v) for v in errors.mean(axis=0))
        history.records.append(
            EpochRecord(
                epoch=epoch,
                lr=lr_last,
                mse=mse_sum / n_batches,
                ranking=ranking_sum / n_batches,
                combined=combined_sum / n_batches,
                val_mae=val_mae,
            )
        )
    return state, history


def predict_batch(state: TrainState, features) -> np.ndarray:
    """Strict-mode predictions for a (B, input_dim) matrix; returns (B, 3)."""
    f, _ = backbone_forward_batch(state.params, features)
    return head_forward_batch(state.head, f, mode="strict")


def predict(state: TrainState, features) -> PoseAngles:
    """Strict-mode prediction for a single input vector."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d input vector, got shape {features.shape}")
    return PoseAngles.from_array(predict_batch(state, features[None, :])[0])


def _fmt(x: float) -> str:
    return repr(float(x))


def write_history(history: TrainHistory, path) -> None:
    """One text record per epoch: losses, learning rate, validation MAE."""
    lines = [HISTORY_HEADER, "epoch,lr,mse,ranking,combined,val_yaw_mae,val_pitch_mae,val_roll_mae"]
    for rec in history.records:
        val = rec.val_mae if rec.val_mae is not None else (math.nan, math.nan, math.nan)
        lines.append(
            ",".join(
                [
                    str(rec.epoch),
                    _fmt(rec.lr),
                    _fmt(rec.mse),
                    _fmt(rec.ranking),
                    _fmt(rec.combined),
                    _fmt(val[0]),
                    _fmt(val[1]),
                    _fmt(val[2]),
                ]
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
