"""Versioned text checkpoints.

A checkpoint is a plain-text container holding a full config echo, the
layer shapes, all parameter arrays in row-major order, and the optimizer
moment buffers plus step counter, so training can resume exactly where
it stopped. Floats are rendered with round-trip precision; identical
states serialize to identical bytes.

Layout (`# rankpose-checkpoint v1`)::

    config <key> <value>     one line per config field
    state step <int>
    state epochs_done <int>
    array <name> <rows> <cols>
    <rows lines of cols space-separated values>

Array names: ``backbone.w{k}``/``backbone.b{k}`` per layer, ``head.weights``,
then ``adam.m{i}``/``adam.v{i}`` aligned with the flat parameter list
``[w0, b0, w1, b1, ..., head.weights]``.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .errors import CheckpointMismatch, MalformedRecord
from .heads import OutputHead
from .losses import LossConfig
from .network import BackboneConfig, BackboneParams
from .optim import AdamConfig, AdamState
from .trainer import TrainConfig, TrainState

CHECKPOINT_HEADER = "# rankpose-checkpoint v1"


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_array(lines: list, name: str, arr: np.ndarray) -> None:
    mat = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    lines.append(f"array {name} {mat.shape[0]} {mat.shape[1]}")
    for row in mat:
        lines.append(" ".join(_fmt(v) for v in row))


def save_checkpoint(state: TrainState, path) -> None:
    cfg = state.config
    lines = [CHECKPOINT_HEADER]
    config_items = [
        ("seed", cfg.seed),
        ("epochs", cfg.epochs),
        ("batch_pairs", cfg.batch_pairs),
        ("eval_every", cfg.eval_every),
        ("head_kind", cfg.head_kind),
        ("beta", _fmt(cfg.loss.beta)),
        ("lr0", _fmt(cfg.adam.lr0)),
        ("adam_beta1", _fmt(cfg.adam.beta1)),
        ("adam_beta2", _fmt(cfg.adam.beta2)),
        ("adam_eps", _fmt(cfg.adam.eps)),
        ("adam_total_steps", cfg.adam.total_steps),
        ("input_dim", cfg.backbone.input_dim),
        ("hidden_dims", ",".join(str(d) for d in cfg.backbone.hidden_dims)),
        ("activation", cfg.backbone.activation),
        ("backbone_seed", cfg.backbone.seed),
        ("alpha", _fmt(state.head.alpha)),
        ("clamp_epsilon", _fmt(state.head.clamp_epsilon)),
        ("schedule_total_steps", state.adam_config.total_steps),
    ]
    for key, value in config_items:
        lines.append(f"config {key} {value}")
    lines.append(f"state step {state.step}")
    lines.append(f"state epochs_done {state.epochs_done}")

    for k, (w, b) in enumerate(zip(state.params.weights, state.params.biases)):
        _write_array(lines, f"backbone.w{k}", w)
        _write_array(lines, f"backbone.b{k}", b)
    _write_array(lines, "head.weights", state.head.weights)
    for i, m in enumerate(state.adam_state.m):
        _write_array(lines, f"adam.m{i}", m)
    for i, v in enumerate(state.adam_state.v):
        _write_array(lines, f"adam.v{i}", v)

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_sections(lines):
    config, state_fields, arrays = {}, {}, {}
    i = 0
    n = len(lines)
    while i < n:
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        parts = line.split()
        if parts[0] == "config":
            if len(parts) < 2:
                raise MalformedRecord(f"line {i + 1}: malformed config line")
            config[parts[1]] = line.split(None, 2)[2] if len(parts) >= 3 else ""
            i += 1
        elif parts[0] == "state":
            if len(parts) != 3:
                raise MalformedRecord(f"line {i + 1}: malformed state line")
            state_fields[parts[1]] = int(parts[2])
            i += 1
        elif parts[0] == "array":
            if len(parts) != 4:
                raise MalformedRecord(f"line {i + 1}: malformed array header")
            name, rows, cols = parts[1], int(parts[2]), int(parts[3])
            if i + rows >= n + 1:
                raise MalformedRecord(f"line {i + 1}: array {name} truncated")
            try:
                values = [
                    [float(v) for v in lines[i + 1 + r].split()] for r in range(rows)
                ]
            except ValueError as exc:
                raise MalformedRecord(f"array {name}: unparseable value ({exc})") from exc
            mat = np.array(values, dtype=np.float64)
            if mat.shape != (rows, cols):
                raise MalformedRecord(
                    f"array {name}: declared {rows}x{cols}, parsed {mat.shape}"
                )
            arrays[name] = mat
            i += 1 + rows
        else:
            raise MalformedRecord(f"line {i + 1}: unknown section {parts[0]!r}")
    return config, state_fields, arrays


def load_checkpoint(path) -> TrainState:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise MalformedRecord(f"line 1: missing header {CHECKPOINT_HEADER!r}")
    config, state_fields, arrays = _parse_sections(lines[1:])

    try:
        hidden_dims = tuple(int(d) for d in config["hidden_dims"].split(","))
        backbone_user = BackboneConfig(
            input_dim=int(config["input_dim"]),
            hidden_dims=hidden_dims,
            activation=config["activation"],
            seed=int(config["backbone_seed"]),
        )
        cfg = TrainConfig(
            epochs=int(config["epochs"]),
            batch_pairs=int(config["batch_pairs"]),
            head_kind=config["head_kind"],
            loss=LossConfig(beta=float(config["beta"])),
            adam=AdamConfig(
                lr0=float(config["lr0"]),
                beta1=float(config["adam_beta1"]),
                beta2=float(config["adam_beta2"]),
                eps=float(config["adam_eps"]),
                total_steps=int(config["adam_total_steps"]),
            ),
            backbone=backbone_user,
            seed=int(config["seed"]),
            eval_every=int(config["eval_every"]),
        )
        schedule_steps = int(config["schedule_total_steps"])
        alpha = float(config["alpha"])
        clamp_epsilon = float(config["clamp_epsilon"])
    except KeyError as exc:
        raise CheckpointMismatch(f"checkpoint missing config key {exc}") from exc

    n_layers = len(hidden_dims)
    weights, biases = [], []
    expected_dims = [backbone_user.input_dim, *hidden_dims]
    for k in range(n_layers):
        try:
            w = arrays[f"backbone.w{k}"]
            b = arrays[f"backbone.b{k}"][0]
        except KeyError as exc:
            raise CheckpointMismatch(f"checkpoint missing array {exc}") from exc
        if w.shape != (expected_dims[k], expected_dims[k + 1]) or b.shape != (expected_dims[k + 1],):
            raise CheckpointMismatch(
                f"layer {k} shapes {w.shape}/{b.shape} do not match config dims {expected_dims[k:k+2]}"
            )
        weights.append(w)
        biases.append(b)
    params = BackboneParams(weights=weights, biases=biases, activation=backbone_user.activation)

    if "head.weights" not in arrays:
        raise CheckpointMismatch("checkpoint missing array 'head.weights'")
    head_weights = arrays["head.weights"]
    if head_weights.shape != (hidden_dims[-1], 3):
        raise CheckpointMismatch(
            f"head weights shape {head_weights.shape} does not match feature dim {hidden_dims[-1]}"
        )
    head = OutputHead(
        kind=cfg.head_kind, weights=head_weights, alpha=alpha, clamp_epsilon=clamp_epsilon
    )

    flat = []
    for w, b in zip(params.weights, params.biases):
        flat.extend([w, b])
    flat.append(head.weights)
    m_buffers, v_buffers = [], []
    for i, p in enumerate(flat):
        try:
            m = arrays[f"adam.m{i}"]
            v = arrays[f"adam.v{i}"]
        except KeyError as exc:
            raise CheckpointMismatch(f"checkpoint missing array {exc}") from exc
        m_buffers.append(m.reshape(p.shape))
        v_buffers.append(v.reshape(p.shape))

    return TrainState(
        config=cfg,
        backbone_config=replace(backbone_user, seed=cfg.seed),
        params=params,
        head=head,
        adam_config=replace(cfg.adam, total_steps=schedule_steps),
        adam_state=AdamState(m=m_buffers, v=v_buffers, t=state_fields.get("step", 0)),
        step=state_fields.get("step", 0),
        epochs_done=state_fields.get("epochs_done", 0),
    )
