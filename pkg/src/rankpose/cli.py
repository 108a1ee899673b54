"""Command-line interface.

One executable with five subcommands:

- ``gen``       write a synthetic dataset
- ``train``     train a model, write a checkpoint and a history file
- ``eval``      score a checkpoint on a dataset, write MAE and CED reports
- ``ablate``    run the 6-cell loss/head grid and write the report
- ``gradcheck`` verify analytic gradients against finite differences

Exit codes are stable: 0 ok, 2 config error, 3 I/O error, 4 training
aborted on a non-finite loss, 5 checkpoint/artifact mismatch, 6
gradient check failure. All outputs are plain text with versioned
headers, byte-identical given identical inputs and seeds.

``--threads`` caps the BLAS worker pool; it is applied before numpy is
imported, so it must be the first thing ``main`` handles.
"""

from __future__ import annotations

import argparse
import os
import sys


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankpose",
        description="Bounded-head pose regression with pairwise ranking supervision.",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="cap numerical worker threads (applied before numpy loads)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_options(p):
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (repeatable; wins over the file)",
        )
        p.add_argument("--seed", type=int, default=None, help="override the run seed")

    p_gen = sub.add_parser("gen", help="generate a synthetic dataset")
    add_config_options(p_gen)
    p_gen.add_argument("--out", required=True, help="dataset file to write")

    p_train = sub.add_parser("train", help="train on a dataset file")
    add_config_options(p_train)
    p_train.add_argument("--dataset", required=True, help="training dataset file")
    p_train.add_argument("--val-dataset", default=None, help="optional validation dataset file")
    p_train.add_argument("--checkpoint-out", required=True, help="checkpoint file to write")
    p_train.add_argument("--history-out", required=True, help="per-epoch history file to write")
    p_train.add_argument("--beta", type=float, default=None, help="override the loss mixing weight")
    p_train.add_argument("--head", default=None, help="override the head kind (dot|cosine|arccos)")
    p_train.add_argument("--epochs", type=int, default=None, help="override the epoch count")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument(
        "--report-out",
        required=True,
        help="report prefix; writes <prefix>.mae.csv and <prefix>.ced.csv",
    )

    p_ablate = sub.add_parser("ablate", help="run the loss/head ablation grid")
    add_config_options(p_ablate)
    p_ablate.add_argument("--report-out", required=True, help="ablation csv file to write")

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p_grad.add_argument("--seed", type=int, default=0, help="base seed")
    p_grad.add_argument("--seeds", type=int, default=10, help="number of seeds to check")
    p_grad.add_argument("--threshold", type=float, default=1e-5, help="max relative error")

    return parser


def _collect_overrides(args) -> dict:
    raw = {}
    for item in args.overrides:
        if "=" not in item:
            from .errors import InvalidConfig



            raise InvalidConfig(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        raw[key.strip()] = value.strip()
    # dedicated flags win over --set
    if args.seed is not None:
        raw["seed"] = str(args.seed)
    if getattr(args, "beta", None) is not None:
        raw["beta"] = str(args.beta)
    if getattr(args, "head", None) is not None:
        raw["head"] = args.head
    if getattr(args, "epochs", None) is not None:
        raw["epochs"] = str(args.epochs)
    return raw


def _cmd_gen(args) -> int:
    from .config import build_run_config
    from .data import generate_synthetic, write_dataset

    cfg = build_run_config(args.config, _collect_overrides(args))
    dataset = generate_synthetic(cfg.synthetic())
    write_dataset(dataset, args.out)
    identities = len(set(s.identity for s in dataset.samples))
    print(
        f"wrote {args.out}: {len(dataset)} samples, {identities} identities, "
        f"dim={dataset.input_dim}, seed={cfg.seed}"
    )
    return 0


def _cmd_train(args) -> int:
    from .checkpoint import save_checkpoint
    from .config import build_run_config
    from .data import read_dataset
    from .errors import DimensionMismatch
    from .trainer import train, write_history

    cfg = build_run_config(args.config, _collect_overrides(args))
    train_set = read_dataset(args.dataset)
    if train_set.input_dim != cfg.input_dim:
        raise DimensionMismatch(
            f"dataset dim {train_set.input_dim} != configured input_dim {cfg.input_dim}; "
            f"set input_dim accordingly"
        )
    val_set = read_dataset(args.val_dataset) if args.val_dataset else None
    state, history = train(train_set, val_set, cfg.train_config())
    save_checkpoint(state, args.checkpoint_out)
    write_history(history, args.history_out)
    final = history.final()
    print(
        f"trained {cfg.head} head for {cfg.epochs} epochs ({state.step} steps): "
        f"mse={final.mse:.6f} ranking={final.ranking:.6f} combined={final.combined:.6f}"
    )
    print(f"wrote {args.checkpoint_out} and {args.history_out}")
    return 0


def _cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .data import read_dataset
    from .errors import CheckpointMismatch
    from .evaluation import (
        ced,
        ced_table_text,
        mae,
        mae_table_text,
        write_ced_csv,
        write_mae_csv,
    )
    from .trainer import predict_batch

    state = load_checkpoint(args.checkpoint)
    dataset = read_dataset(args.dataset)
    if dataset.input_dim != state.backbone_config.input_dim:
        raise CheckpointMismatch(
            f"dataset dim {dataset.input_dim} != checkpoint input dim "
            f"{state.backbone_config.input_dim}"
        )
    predictions = predict_batch(state, dataset.features_matrix())
    truths = dataset.pose_matrix()
    mae_report = mae(predictions, truths)
    ced_table = ced(predictions, truths)
    write_mae_csv(mae_report, f"{args.report_out}.mae.csv")
    write_ced_csv(ced_table, f"{args.report_out}.ced.csv")
    print(mae_table_text(mae_report))
    print()
    print(ced_table_text(ced_table))
    print(f"wrote {args.report_out}.mae.csv and {args.report_out}.ced.csv")
    return 0


def _cmd_ablate(args) -> int:
    from .config import build_run_config
    from .data import generate_in_distribution, generate_nuisance_shifted, generate_synthetic
    from .evaluation import ablation_table_text, run_ablation, write_ablation_csv

    cfg = build_run_config(args.config, _collect_overrides(args))
    synth = cfg.synthetic()
    train_set = generate_synthetic(synth)
    test_sets = {
        "in_distribution": generate_in_distribution(synth, cfg.eval_samples_per_identity),
        "nuisance_shifted": generate_nuisance_shifted(synth, cfg.eval_samples_per_identity),
    }
    seeds = [cfg.seed + i for i in range(cfg.ablation_seeds)]
    result = run_ablation(train_set, test_sets, cfg.train_config(), seeds=seeds)
    write_ablation_csv(result, args.report_out)
    print(f"median avg MAE (degrees) over seeds {seeds}:")
    print(ablation_table_text(result))
    print(f"wrote {args.report_out}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck_suite

    seeds = [args.seed + i for i in range(args.seeds)]
    cases = run_gradcheck_suite(seeds)
    failures = [c for c in cases if not c.passed(args.threshold)]
    for case in cases:
        status = "ok" if case.passed(args.threshold) else "FAIL"
        print(
            f"{status} seed={case.seed} head={case.head_kind} beta={case.beta}: "
            f"max_rel_err={case.max_rel_error:.3e} (worst: {case.worst_param})"
        )
    if failures:
        worst = max(failures, key=lambda c: c.max_rel_error)
        print(
            f"gradcheck FAILED: worst offender seed={worst.seed} head={worst.head_kind} "
            f"beta={worst.beta} param={worst.worst_param} rel_err={worst.max_rel_error:.3e} "
            f"> {args.threshold:g}",
            file=sys.stderr,
        )
        return 6
    print(f"gradcheck passed: {len(cases)} cases, threshold {args.threshold:g}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.threads is not None:
        if args.threads < 1:
            print(f"--threads must be >= 1, got {args.threads}", file=sys.stderr)
            return 2
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(args.threads))

    from .errors import (
        CheckpointMismatch,
        DimensionMismatch,
        InvalidConfig,
        MalformedRecord,
        NonFiniteLoss,
        PoseOutOfRange,
    )

    try:
        return _COMMANDS[args.command](args)
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (MalformedRecord, PoseOutOfRange) as exc:
        print(f"input file error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except NonFiniteLoss as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 4
    except (CheckpointMismatch, DimensionMismatch) as exc:
        print(f"artifact mismatch: {exc}", file=sys.stderr)
        return 5


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
