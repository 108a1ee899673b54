"""Evaluation metrics, report emission, and the ablation grid.

Angles are computed in radians and converted to degrees only when a
report is rendered (factor 180/pi). Reports come in two forms: an
aligned text table for reading and a comma-separated file for plotting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .errors import (
    EmptyInput,
    InvalidConfig,
    LayerOutOfRange,
    LengthMismatch,
    UnsortedThresholds,
)
from .losses import LossConfig
from .network import ForwardTrace, backbone_forward_batch
from .poses import poses_to_matrix
from .trainer import TrainConfig, TrainState, predict_batch, train

RAD_TO_DEG = 180.0 / math.pi

ANGLE_NAMES = ("yaw", "pitch", "roll")

DEFAULT_CED_THRESHOLDS = tuple(float(t) for t in range(1, 31))

# (loss_mode, head_kind) -> report row label, in emission order
ABLATION_GRID = (
    ("mse", "dot"),
    ("mse", "cosine"),
    ("mse", "arccos"),
    ("ranking+mse", "dot"),
    ("ranking+mse", "cosine"),
    ("ranking+mse", "arccos"),
)
ABLATION_LABELS = {
    ("mse", "dot"): "MSE",
    ("mse", "cosine"): "MSE+Cosine",
    ("mse", "arccos"): "MSE+Arccos",
    ("ranking+mse", "dot"): "Ranking loss+MSE",
    ("ranking+mse", "cosine"): "Ranking loss+MSE + Cosine",
    ("ranking+mse", "arccos"): "Ranking loss+MSE + Arccos",
}


@dataclass
class MaeReport:
    """Per-angle and averaged mean absolute error, stored in radians."""

    yaw_mae: float
    pitch_mae: float
    roll_mae: float
    avg_mae: float

    def as_array(self) -> np.ndarray:
        return np.array([self.yaw_mae, self.pitch_mae, self.roll_mae, self.avg_mae])

    def in_degrees(self) -> "MaeReport":
        return MaeReport(*(v * RAD_TO_DEG for v in self.as_array()))


def _check_prediction_arrays(predictions, truths):
    pred = poses_to_matrix(predictions)
    true = poses_to_matrix(truths)
    if pred.shape[0] != true.shape[0]:
        raise LengthMismatch(f"{pred.shape[0]} predictions vs {true.shape[0]} ground truths")
    if pred.shape[0] == 0:
        raise EmptyInput("metric evaluated on empty input")
    return pred, true


def mae(predictions, truths) -> MaeReport:
    """Mean absolute error per angle plus the three-angle average.

    No wrap-around handling: labels live in [-pi/2, pi/2] where absolute
    differences are unambiguous.
    """
    pred, true = _check_prediction_arrays(predictions, truths)
    per_angle = np.mean(np.abs(pred - true), axis=0)
    return MaeReport(
        yaw_mae=float(per_angle[0]),
        pitch_mae=float(per_angle[1]),
        roll_mae=float(per_angle[2]),
        avg_mae=float(np.mean(per_angle)),
    )


@dataclass
class CedTable:
    """Cumulative error distribution: fraction of samples within each threshold.

    ``thresholds_deg`` ascends; ``fractions[t, a]`` is the fraction of test
    samples whose angle ``a`` error is <= threshold ``t`` (in degrees).
    """

    thresholds_deg: np.ndarray
    fractions: np.ndarray

    def fraction(self, angle: str, threshold_deg: float) -> float:
        t = int(np.flatnonzero(self.thresholds_deg == threshold_deg)[0])
        return float(self.fractions[t, ANGLE_NAMES.index(angle)])


def ced(predictions, truths, thresholds_deg: Sequence[float] = DEFAULT_CED_THRESHOLDS) -> CedTable:
    """Empirical CDF of absolute angular error at each threshold (degrees)."""
    pred, true = _check_prediction_arrays(predictions, truths)
    thresholds = np.asarray(thresholds_deg, dtype=np.float64)
    if thresholds.ndim != 1 or thresholds.size == 0:
        raise UnsortedThresholds("thresholds must be a non-empty 1-d ascending sequence")
    if np.any(np.diff(thresholds) <= 0):
        raise UnsortedThresholds(f"thresholds must be strictly ascending, got {thresholds}")
    err_deg = np.abs(pred - true) * RAD_TO_DEG
    fractions = np.mean(err_deg[None, :, :] <= thresholds[:, None, None], axis=1)
    return CedTable(thresholds_deg=thresholds, fractions=fractions)


@dataclass
class ActivationStats:
    """Spread of hidden activations: one variance value per measured vector."""

    variances: np.ndarray
    histogram_counts: np.ndarray
    bin_edges: np.ndarray

    @property
    def mean_variance(self) -> float:
        return float(np.mean(self.variances))


def activation_variance(traces, layer_index: int, bins: int = 20) -> ActivationStats:
    """Population variance (divide by n) of each activation vector at one layer.

    ``traces`` is a ForwardTrace or a list of them; batched traces contribute
    one variance per row. The histogram over the variances uses ``bins``
    equal-width bins.
    """
    if isinstance(traces, ForwardTrace):
        traces = [traces]
    if len(traces) == 0:
        raise EmptyInput("no traces to measure")
    rows = []
    for trace in traces:
        if not (0 <= layer_index < len(trace.activations)):
            raise LayerOutOfRange(
                f"layer {layer_index} outside [0, {len(trace.activations) - 1}]"
            )
        act = trace.activations[layer_index]
        rows.append(act[None, :] if act.ndim == 1 else act)
    activations = np.concatenate(rows, axis=0)
    variances = np.var(activations, axis=1)  # population variance
    counts, edges = np.histogram(variances, bins=bins)
    return ActivationStats(variances=variances, histogram_counts=counts, bin_edges=edges)


def backbone_activation_stats(state: TrainState, dataset: Dataset, layer_index: int = 0, bins: int = 20) -> ActivationStats:
    """Activation statistics of a model's backbone over a dataset."""
    _, trace = backbone_forward_batch(state.params, dataset.features_matrix())
    return activation_variance(trace, layer_index, bins=bins)


@dataclass
class AblationCell:
    label: str
    loss_mode: str
    head_kind: str
    # test-set name -> one MaeReport per seed, in seed order
    reports: dict = field(default_factory=dict)

    def median_avg_mae(self, test_set: str) -> float:
        return float(np.median([r.avg_mae for r in self.reports[test_set]]))


@dataclass
class AblationResult:
    cells: list
    seeds: tuple
    test_set_names: tuple

    def cell(self, label: str) -> AblationCell:
        for c in self.cells:
            if c.label == label:
                return c
        raise KeyError(label)


def run_ablation(
    train_set: Dataset,
    test_sets: dict,
    cfg: TrainConfig,
    grid: Sequence[tuple] = ABLATION_GRID,
    seeds: Optional[Sequence[int]] = None,
) -> AblationResult:
    """Train one model per (loss mode, head kind, seed) and evaluate on each test set.

    Everything except the varied factor (and the seed) is identical across
    cells. ``loss_mode`` is ``"mse"`` (pure MSE, beta = 1) or
    ``"ranking+mse"`` (the configured beta).
    """
    if len(grid) == 0:
        raise InvalidConfig("ablation grid must be non-empty")
    seeds = tuple(seeds) if seeds is not None else (cfg.seed,)
    cells = []
    for loss_mode, head_kind in grid:
        if loss_mode not in ("mse", "ranking+mse"):
            raise InvalidConfig(f"unknown loss mode {loss_mode!r}")
        label = ABLATION_LABELS.get((loss_mode, head_kind), f"{loss_mode}:{head_kind}")
        beta = 1.0 if loss_mode == "mse" else cfg.loss.beta
        cell = AblationCell(label=label, loss_mode=loss_mode, head_kind=head_kind)
        cell.reports = {name: [] for name in test_sets}
        for seed in seeds:
            run_cfg = replace(
                cfg, head_kind=head_kind, loss=LossConfig(beta=beta), seed=seed
            )
            state, _ = train(train_set, None, run_cfg)
            for name, test_set in test_sets.items():
                predictions = predict_batch(state, test_set.features_matrix())
                cell.reports[name].append(mae(predictions, test_set.pose_matrix()))
        cells.append(cell)
    return AblationResult(cells=cells, seeds=seeds, test_set_names=tuple(test_sets))


def mae_table_text(report: MaeReport) -> str:
    lines = [f"{'angle':<8}{'mae_rad':>12}{'mae_deg':>12}"]
    deg = report.in_degrees()
    for name, rad_v, deg_v in zip(
        (*ANGLE_NAMES, "avg"), report.as_array(), deg.as_array()
    ):
        lines.append(f"{name:<8}{rad_v:>12.6f}{deg_v:>12.4f}")
    return "\n".join(lines)


def write_mae_csv(report: MaeReport, path) -> None:
    deg = report.in_degrees()
    lines = ["# rankpose-mae v1", "angle,mae_rad,mae_deg"]
    for name, rad_v, deg_v in zip((*ANGLE_NAMES, "avg"), report.as_array(), deg.as_array()):
        lines.append(f"{name},{rad_v!r},{deg_v!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def ced_table_text(table: CedTable) -> str:
    lines = [f"{'thr_deg':<8}" + "".join(f"{n:>10}" for n in ANGLE_NAMES)]
    for t, thr in enumerate(table.thresholds_deg):
        row = f"{thr:<8.1f}" + "".join(f"{table.fractions[t, a]:>10.4f}" for a in range(3))
        lines.append(row)
    return "\n".join(lines)


def write_ced_csv(table: CedTable, path) -> None:
    lines = ["# rankpose-ced v1", "threshold_deg,yaw,pitch,roll"]
    for t, thr in enumerate(table.thresholds_deg):
        values = ",".join(repr(float(v)) for v in table.fractions[t])
        lines.append(f"{float(thr)!r},{values}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def ablation_table_text(result: AblationResult) -> str:
    """Median avg MAE (degrees) per cell and test set."""
    width = max(len(c.label) for c in result.cells) + 2
    header = f"{'method':<{width}}" + "".join(f"{name:>18}" for name in result.test_set_names)
    lines = [header]
    for cell in result.cells:
        row = f"{cell.label:<{width}}"
        for name in result.test_set_names:
            row += f"{cell.median_avg_mae(name) * RAD_TO_DEG:>18.4f}"
        lines.append(row)
    return "\n".join(lines)


def write_ablation_csv(result: AblationResult, path) -> None:
    """One row per cell, seed, and test set, plus per-cell medians."""
    lines = [
        "# rankpose-ablation v1",
        "label,loss_mode,head,test_set,seed,yaw_deg,pitch_deg,roll_deg,avg_deg",
    ]
    for cell in result.cells:
        for name in result.test_set_names:
            for seed, report in zip(result.seeds, cell.reports[name]):
                deg = report.in_degrees()
                lines.append(
                    f"{cell.label},{cell.loss_mode},{cell.head_kind},{name},{seed},"
                    f"{deg.yaw_mae!r},{deg.pitch_mae!r},{deg.roll_mae!r},{deg.avg_mae!r}"
                )
            median_deg = cell.median_avg_mae(name) * RAD_TO_DEG
            lines.append(
                f"{cell.label},{cell.loss_mode},{cell.head_kind},{name},median,,,,{median_deg!r}"
            )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
