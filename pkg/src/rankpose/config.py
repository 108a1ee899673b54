"""Flat run configuration: ``key = value`` files with override layering.

Precedence is command-line overrides > config file > built-in defaults.
Every key is validated against the schema below; unknown keys are
rejected by name. Lines starting with ``#`` (and blank lines) are
comments.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .data import SyntheticConfig
from .errors import InvalidConfig
from .heads import HEAD_KINDS
from .losses import LossConfig
from .network import ACTIVATIONS, BackboneConfig
from .optim import AdamConfig
from .trainer import TrainConfig


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _parse_int_list(value: str) -> tuple:
    return tuple(int(part.strip()) for part in value.split(",") if part.strip())


@dataclass
class RunConfig:
    """Union of all tunables, flattened for the config file."""

    # synthetic data
    num_identities: int = 50
    samples_per_identity: int = 20
    input_dim: int = 32
    nuisance_dim: int = 8
    nuisance_scale: float = 1.0
    noise_std: float = 0.05
    # backbone
    hidden_dims: tuple = (128, 64)
    activation: str = "relu"
    # training
    epochs: int = 30
    batch_pairs: int = 32
    beta: float = 0.5
    head: str = "arccos"
    eval_every: int = 1
    # optimizer
    lr0: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # evaluation
    eval_samples_per_identity: int = 10
    ablation_seeds: int = 3
    # randomness
    seed: int = 0

    def synthetic(self) -> SyntheticConfig:
        return SyntheticConfig(
            num_identities=self.num_identities,
            samples_per_identity=self.samples_per_identity,
            input_dim=self.input_dim,
            nuisance_dim=self.nuisance_dim,
            nuisance_scale=self.nuisance_scale,
            noise_std=self.noise_std,
            seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_pairs=self.batch_pairs,
            head_kind=self.head,
            loss=LossConfig(beta=self.beta),
            adam=AdamConfig(
                lr0=self.lr0, beta1=self.adam_beta1, beta2=self.adam_beta2, eps=self.adam_eps
            ),
            backbone=BackboneConfig(
                input_dim=self.input_dim, hidden_dims=self.hidden_dims, activation=self.activation
            ),
            seed=self.seed,
            eval_every=self.eval_every,
        )


_PARSERS = {
    int: int,
    float: float,
    str: str,
    bool: _parse_bool,
    tuple: _parse_int_list,
}

_FIELD_TYPES = {
    "num_identities": int,
    "samples_per_identity": int,
    "input_dim": int,
    "nuisance_dim": int,
    "nuisance_scale": float,
    "noise_std": float,
    "hidden_dims": tuple,
    "activation": str,
    "epochs": int,
    "batch_pairs": int,
    "beta": float,
    "head": str,
    "eval_every": int,
    "lr0": float,
    "adam_beta1": float,
    "adam_beta2": float,
    "adam_eps": float,
    "eval_samples_per_identity": int,
    "ablation_seeds": int,
    "seed": int,
}

assert set(_FIELD_TYPES) == {f.name for f in fields(RunConfig)}


def parse_config_file(path) -> dict:
    """Parse a ``key = value`` file into a validated dict of typed values."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values.update(parse_overrides({key.strip(): value.strip()}, context=f"line {lineno}"))
    return values


def parse_overrides(raw: dict, context: str = "override") -> dict:
    """Validate and type-convert a {key: string} mapping against the schema."""
    values = {}
    for key, value in raw.items():
        if key not in _FIELD_TYPES:
            raise InvalidConfig(f"{context}: unknown config key {key!r}")
        parser = _PARSERS[_FIELD_TYPES[key]]
        try:
            values[key] = parser(value) if isinstance(value, str) else value
        except ValueError as exc:
            raise InvalidConfig(f"{context}: bad value for {key!r}: {exc}") from exc
    return values


def build_run_config(file_path=None, overrides=None) -> RunConfig:
    """Layer defaults, an optional config file, and overrides into a RunConfig.

    Validation of cross-field constraints happens when the domain configs
    are constructed, so a bad combination names its constraint.
    """
    values = {}
    if file_path is not None:
        values.update(parse_config_file(file_path))
    if overrides:
        values.update(parse_overrides(overrides))
    cfg = RunConfig(**values)
    if cfg.head not in HEAD_KINDS:
        raise InvalidConfig(f"head must be one of {HEAD_KINDS}, got {cfg.head!r}")
    if cfg.activation not in ACTIVATIONS:
        raise InvalidConfig(f"activation must be one of {ACTIVATIONS}, got {cfg.activation!r}")
    if cfg.ablation_seeds < 1:
        raise InvalidConfig(f"ablation_seeds must be >= 1, got {cfg.ablation_seeds}")
    if cfg.eval_samples_per_identity < 2:
        raise InvalidConfig(
            f"eval_samples_per_identity must be >= 2, got {cfg.eval_samples_per_identity}"
        )
    # construct the domain configs now so their invariants are checked eagerly
    cfg.synthetic()
    cfg.train_config()
    return cfg
