"""Bounded-output regression heads.

A head maps a backbone feature vector to three pose angles (yaw, pitch,
roll). Three kinds are provided:

- ``dot``: plain linear readout ``y_j = w_j . f`` (unbounded baseline).
- ``cosine``: both the feature vector and each weight column are L2
  normalized, so ``y_j = alpha * cos(theta_j)`` where ``theta_j`` is the
  angle between them; ``alpha = pi/2`` keeps outputs in [-pi/2, pi/2].
- ``arccos``: the angle itself, shifted to be symmetric about zero,
  ``y_j = arccos(w_hat_j . f_hat) - pi/2``, always inside (-pi/2, pi/2).

Normalization is functional: it happens in the forward pass and
gradients flow through it, leaving the optimizer unconstrained.
All functions are pure; they never mutate their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, ZeroNormVector
from .rng import named_rng

HEAD_KINDS = ("dot", "cosine", "arccos")

NORM_EPSILON = 1e-12
CLAMP_EPSILON = 1e-7

HALF_PI = math.pi / 2.0


def l2_normalize(v, mode: str = "strict", norm_epsilon: float = NORM_EPSILON) -> np.ndarray:
    """Rescale a vector to unit L2 length, preserving direction.

    In ``strict`` mode a (near-)zero vector raises :class:`ZeroNormVector`.
    In ``train`` mode the norm is stabilized as ``||v|| + norm_epsilon`` so
    transiently tiny activations never divide by zero.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d vector, got shape {v.shape}")
    norm = float(np.linalg.norm(v))
    if mode == "strict":
        if norm <= norm_epsilon:
            raise ZeroNormVector(f"vector norm {norm:g} <= {norm_epsilon:g}")
        return v / norm
    if mode == "train":
        return v / (norm + norm_epsilon)
    raise ValueError(f"unknown mode {mode!r}: expected 'strict' or 'train'")


def _normalize_rows(x: np.ndarray, mode: str, norm_epsilon: float):
    """Normalize each row of a 2-d array; returns (normalized, row norms)."""
    norms = np.linalg.norm(x, axis=1)
    if mode == "strict":
        bad = norms <= norm_epsilon
        if np.any(bad):
            raise ZeroNormVector(
                f"{int(bad.sum())} row(s) have norm <= {norm_epsilon:g}"
            )
        denom = norms
    else:
        denom = norms + norm_epsilon
    return x / denom[:, None], norms


@dataclass
class OutputHead:
    """Final readout layer: a D x 3 weight matrix plus the head kind.

    ``alpha`` scales the cosine head from [-1, 1] to the pose range and is
    pinned to pi/2 for that kind. ``clamp_epsilon`` bounds the arccos input
    away from +-1 where the derivative diverges.
    """

    kind: str
    weights: np.ndarray
    alpha: float = HALF_PI
    clamp_epsilon: float = CLAMP_EPSILON
    norm_epsilon: float = field(default=NORM_EPSILON, repr=False)

    def __post_init__(self):
        if self.kind not in HEAD_KINDS:
            raise InvalidConfig(f"unknown head kind {self.kind!r}: expected one of {HEAD_KINDS}")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[1] != 3:
            raise InvalidConfig(
                f"head weights must be D x 3 (yaw, pitch, roll); got {self.weights.shape}"
            )
        if self.kind == "cosine" and self.alpha != HALF_PI:
            raise InvalidConfig("cosine head requires alpha = pi/2 for pose angles")
        if not (0.0 < self.clamp_epsilon < 1.0):
            raise InvalidConfig("clamp_epsilon must lie in (0, 1)")

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[0]


def init_head(kind: str, feature_dim: int, seed: int) -> OutputHead:
    """Create a head with Glorot-uniform weights, deterministic in the seed."""
    bound = math.sqrt(6.0 / (feature_dim + 3))
    weights = named_rng(seed, "head").uniform(-bound, bound, size=(feature_dim, 3))
    return OutputHead(kind=kind, weights=weights)


def _check_feature_dim(head: OutputHead, features: np.ndarray):
    if features.shape[-1] != head.feature_dim:
        raise DimensionMismatch(
            f"feature dim {features.shape[-1]} does not match head dim {head.feature_dim}"
        )


def head_forward_batch(head: OutputHead, features, mode: str = "strict") -> np.ndarray:
    """Map a (B, D) feature matrix to (B, 3) pose predictions."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise DimensionMismatch(f"expected (B, D) features, got shape {features.shape}")
    _check_feature_dim(head, features)

    if head.kind == "dot":
        return features @ head.weights

    f_hat, _ = _normalize_rows(features, mode, head.norm_epsilon)
    w_hat, _ = _normalize_rows(head.weights.T, mode, head.norm_epsilon)
    cos = f_hat @ w_hat.T
    if head.kind == "cosine":
        # unit vectors can overshoot |cos| = 1 by a few ulp; keep the bound exact
        return head.alpha * np.clip(cos, -1.0, 1.0)
    clamped = np.clip(cos, -1.0 + head.clamp_epsilon, 1.0 - head.clamp_epsilon)
    return np.arccos(clamped) - HALF_PI


def head_forward(head: OutputHead, features, mode: str = "strict") -> np.ndarray:
    """Map a single feature vector to the three pose angles (radians)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d feature vector, got shape {features.shape}")
    return head_forward_batch(head, features[None, :], mode=mode)[0]


def head_backward_batch(head: OutputHead, features, upstream, mode: str = "train"):
    """Backpropagate through the head for a batch.

    Args:
        features: (B, D) inputs as passed to :func:`head_forward_batch`.
        upstream: (B, 3) gradient of the loss w.r.t. the head outputs.
        mode: normalization mode used in the matching forward pass.

    Returns:
        ``(grad_weights, grad_features)`` where ``grad_weights`` is D x 3,
        summed over the batch, and ``grad_features`` is (B, D).
    """
    features = np.asarray(features, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if features.ndim != 2:
        raise DimensionMismatch(f"expected (B, D) features, got shape {features.shape}")
    _check_feature_dim(head, features)
    if upstream.shape != (features.shape[0], 3):
        raise DimensionMismatch(
            f"upstream shape {upstream.shape} does not match ({features.shape[0]}, 3)"
        )

    if head.kind == "dot":
        grad_weights = features.T @ upstream
        grad_features = upstream @ head.weights.T
        return grad_weights, grad_features

    eps = head.norm_epsilon if mode == "train" else 0.0
    f_norms = np.linalg.norm(features, axis=1)
    w_norms = np.linalg.norm(head.weights, axis=0)
    if mode == "strict" and (np.any(f_norms <= head.norm_epsilon) or np.any(w_norms <= head.norm_epsilon)):
        raise ZeroNormVector("zero-norm vector in strict-mode backward")
    f_hat = features / (f_norms + eps)[:, None]
    w_hat = head.weights / (w_norms + eps)[None, :]
    cos = f_hat @ w_hat  # (B, 3)

    if head.kind == "cosine":
        grad_cos = head.alpha * upstream
    else:
        lo = -1.0 + head.clamp_epsilon
        hi = 1.0 - head.clamp_epsilon
        clamped = np.clip(cos, lo, hi)
        # derivative of arccos; zero where the clamp rewrote the input
        inside = (cos >= lo) & (cos <= hi)
        grad_cos = upstream * np.where(inside, -1.0 / np.sqrt(1.0 - clamped * clamped), 0.0)

    # cos = f_hat . w_hat: pull gradients back through both normalizations.
    grad_f_hat = grad_cos @ w_hat.T
    grad_w_hat = f_hat.T @ grad_cos

    denom_f = (f_norms + eps)[:, None]
    proj_f = np.sum(grad_f_hat * features, axis=1, keepdims=True)
    grad_features = grad_f_hat / denom_f - features * proj_f / (f_norms[:, None] * denom_f**2)

    denom_w = (w_norms + eps)[None, :]
    proj_w = np.sum(grad_w_hat * head.weights, axis=0, keepdims=True)
    grad_weights = grad_w_hat / denom_w - head.weights * proj_w / (w_norms[None, :] * denom_w**2)

    return grad_weights, grad_features


def head_backward(head: OutputHead, features, upstream, mode: str = "train"):
    """Single-vector form of :func:`head_backward_batch`.

    Returns ``(grad_weights, grad_features)`` with shapes (D, 3) and (D,).
    """
    features = np.asarray(features, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if features.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d feature vector, got shape {features.shape}")
    if upstream.shape != (3,):
        raise DimensionMismatch(f"upstream must have shape (3,), got {upstream.shape}")
    grad_weights, grad_features = head_backward_batch(
        head, features[None, :], upstream[None, :], mode=mode
    )
    return grad_weights, grad_features[0]
