"""Pose angle triples and array conversion helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, PoseOutOfRange

HALF_PI = math.pi / 2.0


@dataclass(frozen=True)
class PoseAngles:
    """A (yaw, pitch, roll) triple in radians.

    Ground-truth labels always lie in [-pi/2, pi/2]; predictions from the
    bounded heads do too, while the plain dot head may exceed the range.
    """

    yaw: float
    pitch: float
    roll: float

    def as_array(self) -> np.ndarray:
        return np.array([self.yaw, self.pitch, self.roll], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "PoseAngles":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (3,):
            raise DimensionMismatch(f"pose angles must have shape (3,), got {values.shape}")
        return cls(float(values[0]), float(values[1]), float(values[2]))


def as_pose_array(pose) -> np.ndarray:
    """Coerce a PoseAngles or length-3 array-like to a float64 (3,) array."""
    if isinstance(pose, PoseAngles):
        return pose.as_array()
    arr = np.asarray(pose, dtype=np.float64)
    if arr.shape != (3,):
        raise DimensionMismatch(f"pose angles must have shape (3,), got {arr.shape}")
    return arr


def poses_to_matrix(poses) -> np.ndarray:
    """Stack a sequence of poses (or an (N, 3) array) into an (N, 3) array."""
    if isinstance(poses, np.ndarray) and poses.ndim == 2:
        if poses.shape[1] != 3:
            raise DimensionMismatch(f"pose matrix must be (N, 3), got {poses.shape}")
        return poses.astype(np.float64, copy=False)
    return np.stack([as_pose_array(p) for p in poses]) if len(poses) else np.empty((0, 3))


def check_pose_bounds(values, context: str = "pose"):
    """Raise :class:`PoseOutOfRange` if any angle lies outside [-pi/2, pi/2]."""
    values = np.asarray(values, dtype=np.float64)
    if np.any(np.abs(values) > HALF_PI):
        worst = float(np.max(np.abs(values)))
        raise PoseOutOfRange(f"{context}: |angle| = {worst:g} exceeds pi/2")
