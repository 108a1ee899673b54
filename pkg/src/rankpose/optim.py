"""Adam with a cosine learning-rate decay schedule.

The schedule anneals from the initial rate to zero over the full run
with no warm restarts, stepped once per optimizer step:
``lr(t) = lr0 * 0.5 * (1 + cos(pi * t / total_steps))``.

Parameters are handled as flat lists of arrays so the same update code
serves the backbone and the output head. Updates are functional: new
state and parameter arrays are returned, inputs are never mutated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidConfig, ShapeMismatch, StepOutOfRange


@dataclass
class AdamConfig:
    lr0: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    total_steps: int = 1

    def __post_init__(self):
        if self.lr0 < 0.0:
            raise InvalidConfig(f"lr0 must be >= 0, got {self.lr0}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InvalidConfig(f"beta1/beta2 must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.eps <= 0.0:
            raise InvalidConfig(f"eps must be > 0, got {self.eps}")
        if self.total_steps < 1:
            raise InvalidConfig(f"total_steps must be positive, got {self.total_steps}")


@dataclass
class AdamState:
    """First/second moment buffers shaped like the parameters, plus step count."""

    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], t=0)


def cosine_lr(cfg: AdamConfig, step: int) -> float:
    """Learning rate after ``step`` optimizer steps; exact at the endpoints."""
    if not 0 <= step <= cfg.total_steps:
        raise StepOutOfRange(f"step {step} outside [0, {cfg.total_steps}]")
    return cfg.lr0 * 0.5 * (1.0 + math.cos(math.pi * step / cfg.total_steps))


def adam_step(
    state: AdamState,
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    cfg: AdamConfig,
    step: int,
):
    """One bias-corrected Adam update at the scheduled rate for ``step``.

    ``step`` is 1-indexed and must equal ``state.t + 1``. Returns
    ``(new_state, new_params)``.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch(
            f"got {len(params)} params, {len(grads)} grads, {len(state.m)} moment buffers"
        )
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatch(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
    if step != state.t + 1:
        raise StepOutOfRange(f"step {step} is not state.t + 1 = {state.t + 1}")

    lr = cosine_lr(cfg, step)
    bias1 = 1.0 - cfg.beta1**step
    bias2 = 1.0 - cfg.beta2**step
    new_m, new_v, new_params = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m_next = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v_next = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
        m_hat = m_next / bias1
        v_hat = v_next / bias2
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + cfg.eps))
        new_m.append(m_next)
        new_v.append(v_next)
    return AdamState(m=new_m, v=new_v, t=step), new_params
