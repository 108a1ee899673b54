"""Desk-scale differentiable backbone.

A configurable multilayer perceptron maps raw input features to the
feature vector consumed by an output head. Every hidden layer is an
affine map followed by the configured activation; the last hidden width
is the backbone output width. Forward passes retain per-layer
pre-activations and activations both for exact backpropagation and for
activation-variance statistics.

Double precision throughout; forward/backward are pure functions of
``(params, input)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, TraceMismatch
from .rng import named_rng

ACTIVATIONS = ("relu", "tanh")


@dataclass
class BackboneConfig:
    input_dim: int = 32
    hidden_dims: tuple = (128, 64)
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        self.hidden_dims = tuple(int(d) for d in self.hidden_dims)
        if self.input_dim < 1:
            raise InvalidConfig(f"input_dim must be positive, got {self.input_dim}")
        if len(self.hidden_dims) < 1 or any(d < 1 for d in self.hidden_dims):
            raise InvalidConfig(f"hidden_dims must be non-empty positive ints, got {self.hidden_dims}")
        if self.activation not in ACTIVATIONS:
            raise InvalidConfig(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def feature_dim(self) -> int:
        return self.hidden_dims[-1]


@dataclass
class BackboneParams:
    """Per-layer weight matrices (fan_in x fan_out) and bias vectors."""

    weights: list
    biases: list
    activation: str = "relu"

    def layer_dims(self):
        return [w.shape for w in self.weights]

    def copy(self) -> "BackboneParams":
        return BackboneParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
        )


@dataclass
class ForwardTrace:
    """Intermediates retained from a forward pass.

    ``pre_activations[k]`` and ``activations[k]`` hold layer k's affine
    output and its activation. For batched passes each entry is (B, width)
    and every row is one input.
    """

    inputs: np.ndarray
    pre_activations: list = field(default_factory=list)
    activations: list = field(default_factory=list)


def init_backbone(cfg: BackboneConfig) -> BackboneParams:
    """Glorot-uniform weights, zero biases; bit-identical given the seed."""
    rng = named_rng(cfg.seed, "backbone-init")
    dims = [cfg.input_dim, *cfg.hidden_dims]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return BackboneParams(weights=weights, biases=biases, activation=cfg.activation)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_grad(z: np.ndarray, a: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        # subgradient at exactly zero is zero
        return (z > 0.0).astype(np.float64)
    return 1.0 - a * a


def backbone_forward_batch(params: BackboneParams, x) -> tuple:
    """Forward a (B, input_dim) batch; returns ``(features, trace)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch(f"expected (B, input_dim) input, got shape {x.shape}")
    if x.shape[1] != params.weights[0].shape[0]:
        raise DimensionMismatch(
            f"input dim {x.shape[1]} does not match backbone input {params.weights[0].shape[0]}"
        )
    trace = ForwardTrace(inputs=x)
    a = x
    for w, b in zip(params.weights, params.biases):
        z = a @ w + b
        a = _activate(z, params.activation)
        trace.pre_activations.append(z)
        trace.activations.append(a)
    return a, trace


def backbone_forward(params: BackboneParams, x) -> tuple:
    """Forward a single input vector; returns ``(feature_vector, trace)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d input vector, got shape {x.shape}")
    features, trace = backbone_forward_batch(params, x[None, :])
    squeezed = ForwardTrace(
        inputs=trace.inputs[0],
        pre_activations=[z[0] for z in trace.pre_activations],
        activations=[a[0] for a in trace.activations],
    )
    return features[0], squeezed


@dataclass
class BackboneGrads:
    weights: list
    biases: list

    def as_list(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


def _check_trace(params: BackboneParams, trace: ForwardTrace, batched: bool):
    n_layers = len(params.weights)
    if len(trace.pre_activations) != n_layers or len(trace.activations) != n_layers:
        raise TraceMismatch(
            f"trace has {len(trace.activations)} layers, parameters have {n_layers}"
        )
    for k, w in enumerate(params.weights):
        width = trace.activations[k].shape[-1]
        if width != w.shape[1]:
            raise TraceMismatch(f"layer {k}: trace width {width} != parameter width {w.shape[1]}")
    expected_in = params.weights[0].shape[0]
    if trace.inputs.shape[-1] != expected_in:
        raise TraceMismatch(
            f"trace input dim {trace.inputs.shape[-1]} != backbone input {expected_in}"
        )
    if batched and trace.inputs.ndim != 2:
        raise TraceMismatch("expected a batched trace (2-d arrays)")


def backbone_backward_batch(params: BackboneParams, trace: ForwardTrace, grad_features):
    """Exact gradients for a batched forward pass.

    ``grad_features`` is (B, feature_dim); parameter gradients are summed
    over the batch. Returns ``(BackboneGrads, grad_inputs)``.
    """
    grad_features = np.asarray(grad_features, dtype=np.float64)
    _check_trace(params, trace, batched=True)
    if grad_features.shape != trace.activations[-1].shape:
        raise TraceMismatch(
            f"grad_features shape {grad_features.shape} != trace output {trace.activations[-1].shape}"
        )

    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.biases)
    delta = grad_features
    for k in range(len(params.weights) - 1, -1, -1):
        z = trace.pre_activations[k]
        a = trace.activations[k]
        delta = delta * _activate_grad(z, a, params.activation)
        prev = trace.inputs if k == 0 else trace.activations[k - 1]
        grad_w[k] = prev.T @ delta
        grad_b[k] = delta.sum(axis=0)
        delta = delta @ params.weights[k].T
    return BackboneGrads(weights=grad_w, biases=grad_b), delta


def backbone_backward(params: BackboneParams, trace: ForwardTrace, grad_features):
    """Single-input form of :func:`backbone_backward_batch`."""
    grad_features = np.asarray(grad_features, dtype=np.float64)
    if trace.inputs.ndim != 1:
        raise TraceMismatch("expected a single-input trace (1-d arrays)")
    batched = ForwardTrace(
        inputs=trace.inputs[None, :],
        pre_activations=[z[None, :] for z in trace.pre_activations],
        activations=[a[None, :] for a in trace.activations],
    )
    grads, grad_x = backbone_backward_batch(params, batched, grad_features[None, :])
    return grads, grad_x[0]


def params_as_list(params: BackboneParams):
    """Flatten parameters into a deterministic [w0, b0, w1, b1, ...] list."""
    out = []
    for w, b in zip(params.weights, params.biases):
        out.extend([w, b])
    return out


def params_from_list(arrays: Sequence[np.ndarray], activation: str) -> BackboneParams:
    if len(arrays) % 2 != 0:
        raise DimensionMismatch("parameter list must alternate weights and biases")
    weights = [np.asarray(a, dtype=np.float64) for a in arrays[0::2]]
    biases = [np.asarray(a, dtype=np.float64) for a in arrays[1::2]]
    return BackboneParams(weights=weights, biases=biases, activation=activation)
