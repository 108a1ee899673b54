"""Exception types raised across the library.

Most errors signal contract violations on inputs and derive from
``ValueError`` so that generic callers can still catch them coarsely.
"""


class RankPoseError(Exception):
    """Base class for all library-specific errors."""


class ZeroNormVector(RankPoseError, ValueError):
    """A vector with (near-)zero L2 norm was normalized in strict mode."""


class DimensionMismatch(RankPoseError, ValueError):
    """Array dimensions do not agree with the configured sizes."""


class EmptyBatch(RankPoseError, ValueError):
    """A loss was evaluated on an empty batch."""


class InvalidConfig(RankPoseError, ValueError):
    """A configuration object violates its invariants."""


class TraceMismatch(RankPoseError, ValueError):
    """A forward trace does not match the parameters it is replayed against."""


class ShapeMismatch(RankPoseError, ValueError):
    """Optimizer buffers and parameter/gradient shapes disagree."""


class StepOutOfRange(RankPoseError, ValueError):
    """A schedule was queried outside [0, total_steps]."""


class NoEligibleIdentity(RankPoseError, ValueError):
    """No identity in the dataset has at least two samples to pair."""


class MalformedRecord(RankPoseError, ValueError):
    """A dataset file record could not be parsed; the message names the line."""


class PoseOutOfRange(RankPoseError, ValueError):
    """A pose angle lies outside [-pi/2, pi/2]."""


class LengthMismatch(RankPoseError, ValueError):
    """Prediction and ground-truth collections differ in length."""


class EmptyInput(RankPoseError, ValueError):
    """A metric was evaluated on an empty collection."""


class UnsortedThresholds(RankPoseError, ValueError):
    """Cumulative-error thresholds are not strictly ascending."""


class LayerOutOfRange(RankPoseError, ValueError):
    """An activation-statistics query named a nonexistent layer."""


class NonFiniteLoss(RankPoseError, RuntimeError):
    """Training produced a NaN or infinite loss; the message names the step."""


class CheckpointMismatch(RankPoseError, ValueError):
    """A checkpoint is inconsistent with the artifact it is applied to."""
