"""Finite-difference verification of the analytic gradients.

The checker rebuilds the training loss from forward passes only and
compares central finite differences against the backpropagated
gradients of the full pipeline (backbone -> head -> combined loss), for
every parameter of a small network. Draws that land near a kink (ReLU
zero, ranking hinge boundary, arccos clamp) are rejected and redrawn,
since no subgradient convention can match finite differences there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .heads import head_forward_batch, init_head
from .losses import LossConfig, combined_loss_arrays
from .network import (
    BackboneConfig,
    backbone_forward_batch,
    init_backbone,
    params_as_list,
    params_from_list,
)
from .rng import named_rng
from .trainer import batch_loss_and_grads

HALF_PI = math.pi / 2.0

DEFAULT_FD_STEP = 1e-5
KINK_MARGIN = 1e-3


def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function, one element at a time."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    x_flat = x.ravel()
    for i in range(x_flat.size):
        original = x_flat[i]
        x_flat[i] = original + step
        f_plus = f(x)
        x_flat[i] = original - step
        f_minus = f(x)
        x_flat[i] = original
        flat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest deviation, normalized by the largest gradient magnitude.

    Falls back to the absolute deviation when both gradients are tiny,
    where a ratio would be meaningless.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    diff = float(np.max(np.abs(analytic - numeric))) if analytic.size else 0.0
    scale = max(
        float(np.max(np.abs(analytic))) if analytic.size else 0.0,
        float(np.max(np.abs(numeric))) if numeric.size else 0.0,
    )
    if scale < 1e-6:
        return diff
    return diff / scale


@dataclass
class GradCheckCase:
    """Result of one pipeline check: a (head, beta, seed) combination."""

    head_kind: str
    beta: float
    seed: int
    max_rel_error: float
    worst_param: str

    def passed(self, threshold: float) -> bool:
        return self.max_rel_error <= threshold


def _draw_problem(seed: int, head_kind: str, input_dim: int, hidden_dims: tuple, n_pairs: int):
    """Draw a tiny network and batch whose loss is smooth around the draw."""
    backbone_cfg = BackboneConfig(
        input_dim=input_dim, hidden_dims=hidden_dims, activation="relu", seed=seed
    )
    params = init_backbone(backbone_cfg)
    head = init_head(head_kind, backbone_cfg.feature_dim, seed)

    for attempt in range(200):
        rng = named_rng(seed, "gradcheck-batch", attempt)
        x1 = rng.normal(0.0, 1.0, size=(n_pairs, input_dim))
        x2 = rng.normal(0.0, 1.0, size=(n_pairs, input_dim))
        t1 = rng.uniform(-HALF_PI, HALF_PI, size=(n_pairs, 3))
        t2 = rng.uniform(-HALF_PI, HALF_PI, size=(n_pairs, 3))

        f1, trace1 = backbone_forward_batch(params, x1)
        f2, trace2 = backbone_forward_batch(params, x2)
        pre = np.concatenate(
            [z.ravel() for z in trace1.pre_activations + trace2.pre_activations]
        )
        if np.min(np.abs(pre)) <= KINK_MARGIN:
            continue
        y1 = head_forward_batch(head, f1, mode="train")
        y2 = head_forward_batch(head, f2, mode="train")
        if np.min(np.abs(y2 - y1)) <= KINK_MARGIN:  # ranking hinge boundary
            continue
        if np.min(np.abs(t2 - t1)) <= KINK_MARGIN:  # label ties flip the sign factor
            continue
        if head_kind in ("cosine", "arccos"):
            f1n = f1 / (np.linalg.norm(f1, axis=1, keepdims=True) + head.norm_epsilon)
            f2n = f2 / (np.linalg.norm(f2, axis=1, keepdims=True) + head.norm_epsilon)
            wn = head.weights / (np.linalg.norm(head.weights, axis=0, keepdims=True) + head.norm_epsilon)
            cos_all = np.concatenate([(f1n @ wn).ravel(), (f2n @ wn).ravel()])
            if np.max(np.abs(cos_all)) >= 1.0 - KINK_MARGIN:  # arccos clamp region
                continue
        return params, head, x1, x2, t1, t2
    raise RuntimeError(f"could not draw a kink-free batch for seed {seed}, head {head_kind}")


def pipeline_gradcheck(
    seed: int,
    head_kind: str,
    beta: float,
    input_dim: int = 5,
    hidden_dims: tuple = (8, 6),
    n_pairs: int = 4,
    step: float = DEFAULT_FD_STEP,
) -> GradCheckCase:
    """Compare analytic and finite-difference gradients for one configuration."""
    params, head, x1, x2, t1, t2 = _draw_problem(seed, head_kind, input_dim, hidden_dims, n_pairs)
    loss_cfg = LossConfig(beta=beta)

    _, analytic = batch_loss_and_grads(params, head, x1, x2, t1, t2, loss_cfg)

    flat = params_as_list(params) + [head.weights]
    names = []
    for k in range(len(params.weights)):
        names.extend([f"backbone.w{k}", f"backbone.b{k}"])
    names.append("head.weights")

    def loss_with(arrays) -> float:
        p = params_from_list(arrays[:-1], params.activation)
        h = replace(head, weights=arrays[-1])
        f1, _ = backbone_forward_batch(p, x1)
        f2, _ = backbone_forward_batch(p, x2)
        y1 = head_forward_batch(h, f1, mode="train")
        y2 = head_forward_batch(h, f2, mode="train")
        return combined_loss_arrays(y1, y2, t1, t2, loss_cfg).combined

    worst_err, worst_name = 0.0, names[0]
    for idx, (name, array) in enumerate(zip(names, flat)):
        def f_of(arr, _idx=idx):
            trial = [a if j != _idx else arr for j, a in enumerate(flat)]
            return loss_with(trial)

        numeric = numerical_gradient(f_of, array.copy(), step=step)
        err = max_relative_error(analytic[idx], numeric)
        if err > worst_err:
            worst_err, worst_name = err, name
    return GradCheckCase(
        head_kind=head_kind, beta=beta, seed=seed, max_rel_error=worst_err, worst_param=worst_name
    )


def run_gradcheck_suite(
    seeds: Sequence[int],
    betas: Sequence[float] = (0.0, 0.5, 1.0),
    head_kinds: Sequence[str] = ("dot", "cosine", "arccos"),
) -> list:
    """All (seed, head, beta) combinations; returns the list of cases."""
    cases = []
    for seed in seeds:
        for head_kind in head_kinds:
            for beta in betas:
                cases.append(pipeline_gradcheck(seed, head_kind, beta))
    return cases
