"""Synthetic identity-structured pose data, pair sampling, and file I/O.

Each identity carries a fixed latent nuisance vector standing in for
pose-irrelevant factors (who the person is, lighting, ...). A sample's
input features are a fixed random nonlinear map of ``[pose; nuisance]``
plus observation noise, so the pose signal is entangled with identity
effects exactly as paired-image training assumes: samples of one
identity share everything except pose.

The map is drawn once per seed; evaluation sets can reuse it with the
training identities (in-distribution) or with freshly drawn nuisance
vectors (nuisance-shifted) to probe generalization to unseen identities.

Dataset file format (plain text, one record per line)::

    # rankpose-dataset v1 dim=D
    id,identity,yaw,pitch,roll,f_0,...,f_{D-1}

Angles are radians; floats are rendered with full round-trip precision,
so write/read is lossless.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidConfig,
    MalformedRecord,
    NoEligibleIdentity,
)
from .poses import PoseAngles, check_pose_bounds
from .rng import named_rng

HALF_PI = math.pi / 2.0

DATASET_HEADER_PREFIX = "# rankpose-dataset v1 dim="


@dataclass
class SyntheticConfig:
    num_identities: int = 50
    samples_per_identity: int = 20
    input_dim: int = 32
    nuisance_dim: int = 8
    nuisance_scale: float = 1.0
    noise_std: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.num_identities < 1:
            raise InvalidConfig(f"num_identities must be positive, got {self.num_identities}")
        if self.samples_per_identity < 2:
            raise InvalidConfig(
                f"samples_per_identity must be >= 2 so every identity can form pairs, "
                f"got {self.samples_per_identity}"
            )
        if self.input_dim < 1:
            raise InvalidConfig(f"input_dim must be positive, got {self.input_dim}")
        if self.nuisance_dim < 1:
            raise InvalidConfig(f"nuisance_dim must be positive, got {self.nuisance_dim}")
        if self.nuisance_scale < 0.0 or self.noise_std < 0.0:
            raise InvalidConfig("nuisance_scale and noise_std must be >= 0")


@dataclass
class Sample:
    id: int
    identity: int
    features: np.ndarray
    pose: PoseAngles


@dataclass
class Dataset:
    samples: list
    input_dim: int

    def __len__(self) -> int:
        return len(self.samples)

    def features_matrix(self) -> np.ndarray:
        return np.stack([s.features for s in self.samples]) if self.samples else np.empty((0, self.input_dim))

    def pose_matrix(self) -> np.ndarray:
        return np.stack([s.pose.as_array() for s in self.samples]) if self.samples else np.empty((0, 3))

    def identity_array(self) -> np.ndarray:
        return np.array([s.identity for s in self.samples], dtype=np.int64)

    def indices_by_identity(self) -> dict:
        by_id: dict = {}
        for idx, s in enumerate(self.samples):
            by_id.setdefault(s.identity, []).append(idx)
        return by_id


class SyntheticWorld:
    """A fixed feature map plus one nuisance vector per identity.

    The map is a two-layer tanh network from ``3 + nuisance_dim`` inputs
    to ``input_dim`` outputs, drawn once from the config seed. Identity
    ``k``'s samples are ``map([pose; nuisance_k]) + noise``.
    """

    def __init__(self, cfg: SyntheticConfig, nuisances: np.ndarray, map_params: tuple):
        self.cfg = cfg
        self.nuisances = nuisances
        self._w1, self._b1, self._w2, self._b2 = map_params

    @classmethod
    def from_config(cls, cfg: SyntheticConfig) -> "SyntheticWorld":
        rng = named_rng(cfg.seed, "feature-map")
        fan_in = 3 + cfg.nuisance_dim
        hidden = 2 * cfg.input_dim
        w1 = rng.normal(0.0, 1.5 / math.sqrt(fan_in), size=(fan_in, hidden))
        b1 = rng.normal(0.0, 0.5, size=hidden)
        w2 = rng.normal(0.0, 1.5 / math.sqrt(hidden), size=(hidden, cfg.input_dim))
        b2 = rng.normal(0.0, 0.5, size=cfg.input_dim)
        nuisances = cls._draw_nuisances(cfg, nuisance_key=0)
        return cls(cfg, nuisances, (w1, b1, w2, b2))

    @staticmethod
    def _draw_nuisances(cfg: SyntheticConfig, nuisance_key: int) -> np.ndarray:
        rng = named_rng(cfg.seed, "nuisance", nuisance_key)
        return cfg.nuisance_scale * rng.standard_normal((cfg.num_identities, cfg.nuisance_dim))

    def with_fresh_nuisance(self, shift_key: int) -> "SyntheticWorld":
        """Same feature map, freshly drawn identity nuisance vectors."""
        if shift_key == 0:
            raise InvalidConfig("shift_key 0 denotes the training identities; use a nonzero key")
        shifted = SyntheticWorld.__new__(SyntheticWorld)
        shifted.cfg = self.cfg
        shifted.nuisances = self._draw_nuisances(self.cfg, nuisance_key=shift_key)
        shifted._w1, shifted._b1, shifted._w2, shifted._b2 = self._w1, self._b1, self._w2, self._b2
        return shifted

    def clean_features(self, poses, identity_indices) -> np.ndarray:
        """Noise-free features for (M, 3) poses and their identity indices."""
        poses = np.asarray(poses, dtype=np.float64)
        identity_indices = np.asarray(identity_indices, dtype=np.int64)
        latent = np.concatenate([poses, self.nuisances[identity_indices]], axis=1)
        hidden = np.tanh(latent @ self._w1 + self._b1)
        return np.tanh(hidden @ self._w2 + self._b2)

    def sample_dataset(self, samples_per_identity: Optional[int] = None, draw_key: int = 0) -> Dataset:
        """Draw one dataset: uniform poses, map features, additive noise.

        Distinct ``draw_key`` values give independent pose/noise draws from
        the same world.
        """
        cfg = self.cfg
        per_identity = cfg.samples_per_identity if samples_per_identity is None else samples_per_identity
        total = cfg.num_identities * per_identity
        pose_rng = named_rng(cfg.seed, "pose", draw_key)
        noise_rng = named_rng(cfg.seed, "noise", draw_key)
        poses = pose_rng.uniform(-HALF_PI, HALF_PI, size=(total, 3))
        identity_indices = np.repeat(np.arange(cfg.num_identities), per_identity)
        features = self.clean_features(poses, identity_indices)
        features = features + cfg.noise_std * noise_rng.standard_normal(features.shape)
        samples = [
            Sample(
                id=i,
                identity=int(identity_indices[i]),
                features=features[i],
                pose=PoseAngles.from_array(poses[i]),
            )
            for i in range(total)
        ]
        return Dataset(samples=samples, input_dim=cfg.input_dim)


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    """The canonical training dataset for a config; deterministic in the seed."""
    return SyntheticWorld.from_config(cfg).sample_dataset()


def generate_in_distribution(
    cfg: SyntheticConfig, samples_per_identity: Optional[int] = None, draw_key: int = 1
) -> Dataset:
    """Held-out samples of the training identities (same nuisance vectors)."""
    if draw_key == 0:
        raise InvalidConfig("draw_key 0 reproduces the training set; use a nonzero key")
    return SyntheticWorld.from_config(cfg).sample_dataset(samples_per_identity, draw_key=draw_key)


def generate_nuisance_shifted(
    cfg: SyntheticConfig, samples_per_identity: Optional[int] = None, shift_key: int = 1
) -> Dataset:
    """Samples of unseen identities: nuisance vectors re-drawn with a fresh key."""
    world = SyntheticWorld.from_config(cfg).with_fresh_nuisance(shift_key)
    return world.sample_dataset(samples_per_identity, draw_key=-shift_key)


@dataclass
class PairBatch:
    """Index pairs into a dataset; both members always share an identity."""

    pairs: np.ndarray  # (N, 2) sample indices

    def __len__(self) -> int:
        return len(self.pairs)


def eligible_identities(dataset: Dataset) -> list:
    """Identity ids with at least two samples, in sorted order."""
    by_id = dataset.indices_by_identity()
    return sorted(ident for ident, idxs in by_id.items() if len(idxs) >= 2)


def sample_pairs(dataset: Dataset, batch_pairs: int, rng: np.random.Generator) -> PairBatch:
    """Draw ``batch_pairs`` same-identity pairs.

    An eligible identity is chosen uniformly, then two distinct samples of
    it uniformly. Identities with fewer than two samples are excluded (a
    warning is emitted once per process).
    """
    by_id = dataset.indices_by_identity()
    eligible = eligible_identities(dataset)
    if not eligible:
        raise NoEligibleIdentity("no identity has >= 2 samples; cannot form pairs")
    if len(eligible) < len(by_id):
        warnings.warn(
            f"{len(by_id) - len(eligible)} identity(ies) with a single sample excluded from pairing",
            stacklevel=2,
        )
    pairs = np.empty((batch_pairs, 2), dtype=np.int64)
    identity_choices = rng.integers(0, len(eligible), size=batch_pairs)
    for i, ident_pos in enumerate(identity_choices):
        idxs = by_id[eligible[ident_pos]]
        first, second = rng.choice(len(idxs), size=2, replace=False)
        pairs[i, 0] = idxs[first]
        pairs[i, 1] = idxs[second]
    return PairBatch(pairs=pairs)


def batches_per_epoch(dataset: Dataset, batch_pairs: int) -> int:
    """Epoch accounting: ceil(total samples / (2 * pairs per batch))."""
    return max(1, math.ceil(len(dataset) / (2 * batch_pairs)))


def _format_float(x: float) -> str:
    return repr(float(x))


def write_dataset(dataset: Dataset, path) -> None:
    """Write the versioned text format; lossless at double precision."""
    lines = [f"{DATASET_HEADER_PREFIX}{dataset.input_dim}"]
    for s in dataset.samples:
        fields = [
            str(int(s.id)),
            str(int(s.identity)),
            _format_float(s.pose.yaw),
            _format_float(s.pose.pitch),
            _format_float(s.pose.roll),
            *(_format_float(v) for v in s.features),
        ]
        lines.append(",".join(fields))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_dataset(path) -> Dataset:
    """Read and validate the versioned text format."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(DATASET_HEADER_PREFIX):
        raise MalformedRecord(f"line 1: missing header '{DATASET_HEADER_PREFIX}D'")
    try:
        dim = int(lines[0][len(DATASET_HEADER_PREFIX):])
    except ValueError as exc:
        raise MalformedRecord("line 1: unparseable dimension in header") from exc
    if dim < 1:
        raise MalformedRecord(f"line 1: dimension must be positive, got {dim}")

    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 5 + dim:
            raise DimensionMismatch(
                f"line {lineno}: expected {5 + dim} fields (id,identity,3 angles,{dim} features), "
                f"got {len(fields)}"
            )
        try:
            sample_id = int(fields[0])
            identity = int(fields[1])
            numbers = np.array([float(v) for v in fields[2:]], dtype=np.float64)
        except ValueError as exc:
            raise MalformedRecord(f"line {lineno}: unparseable field ({exc})") from exc
        angles = numbers[:3]
        check_pose_bounds(angles, context=f"line {lineno}")
        samples.append(
            Sample(
                id=sample_id,
                identity=identity,
                features=numbers[3:],
                pose=PoseAngles.from_array(angles),
            )
        )
    return Dataset(samples=samples, input_dim=dim)
