"""Command-line entry points.

Subcommands: ``synth`` (generate a causal-graph dataset), ``train`` (single
run), ``sweep`` (method x fraction x seed grid), ``eval`` (recompute metrics
from a checkpoint), ``inspect`` (validate a dataset), ``plotdata`` (tables +
figures from sweep results).

Every flag can also be supplied through a JSON config file (``--config``);
explicit command-line flags win. The PIDISTILL_OUTPUT_ROOT environment
variable relocates relative output paths and affects nothing else. Exit
codes: 0 success, 1 failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .data import load_dataset, make_split, split_hash, write_dataset
from .errors import ConfigError, LoadError, PidistillError
from .figures import emit_plotdata
from .heads import HEAD_VARIANTS
from .metrics import MetricSummary  # noqa: F401  (re-export convenience)
from .sweep import SweepConfig, plan_sweep, run_sweep
from .synthgen import REGIMES, SCMConfig, generate, save_ground_truth
from .training import (
    METHODS,
    TrainConfig,
    collect_scores,
    rebuild_model,
    score_metrics,
    train_student,
    train_teacher,
)

OUTPUT_ROOT_VAR = "PIDISTILL_OUTPUT_ROOT"


def out_path(value: str) -> Path:
    """Resolve an output location, honoring the output-root variable."""
    path = Path(value)
    root = os.environ.get(OUTPUT_ROOT_VAR)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def dataset_paths(data_dir: str) -> tuple[Path, Path]:
    base = Path(data_dir)
    return base / "manifest.json", base / "embeddings.bin"


def checkpoint_paths(ref: str) -> tuple[Path, Path]:
    """Accept a checkpoint manifest path or a directory holding one."""
    path = Path(ref)
    if path.is_dir():
        path = path / "checkpoint.json"
    if path.suffix != ".json":
        raise ConfigError(f"checkpoint reference must be a .json manifest "
                          f"or a directory, got {ref!r}")
    return path, path.with_suffix(".bin")


def _require(args, name: str):
    value = getattr(args, name)
    if value is None:
        raise ConfigError(f"--{name.replace('_', '-')} is required")
    return value


def _floats(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}"
                          ) from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}"
                          ) from exc


def _epochs_table(text: str) -> dict[float, int]:
    """Parse "0.05=40,1.0=10" into a fraction -> epochs mapping."""
    table: dict[float, int] = {}
    for pair in text.split(","):
        pair = pair.strip()
        if not pair:
            continue
        if "=" not in pair:
            raise ConfigError(
                f"epochs table entries look like FRACTION=EPOCHS, got {pair!r}")
        left, right = pair.split("=", 1)
        try:
            table[float(left)] = int(right)
        except ValueError as exc:
            raise ConfigError(f"bad epochs table entry {pair!r}") from exc
    if not table:
        raise ConfigError("empty epochs table")
    return table


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    config = SCMConfig(
        regime=_require(args, "regime"),
        n_samples=_require(args, "n_samples"),
        seed=_require(args, "seed"),
        latent_dim=args.latent_dim, d_image=args.d_image, d_text=args.d_text,
        image_tokens=args.image_tokens, text_tokens=args.text_tokens,
        image_noise=args.image_noise, text_noise=args.text_noise,
        label_noise=args.label_noise, n_classes=args.n_classes)
    dataset, ground_truth = generate(config)
    out = out_path(_require(args, "out"))
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(dataset, out / "manifest.json", out / "embeddings.bin")
    save_ground_truth(ground_truth, out / "oracle.npz")
    counts = {c: int((dataset.labels == c).sum())
              for c in range(config.n_classes)}
    print(f"wrote {len(dataset)} {config.regime} samples to {out} "
          f"(labels {counts}); oracle in oracle.npz")
    return 0


def _train_config_from(args) -> TrainConfig:
    return TrainConfig(
        method=_require(args, "method"), epochs=_require(args, "epochs"),
        seed=_require(args, "seed"), lam=args.lam, tau=args.tau,
        learning_rate=args.lr, batch_size=args.batch_size,
        head_variant=args.head, dropout_p=args.dropout,
        auc_averaging=args.auc_averaging, eval_train=args.eval_train)


def cmd_train(args) -> int:
    config = _train_config_from(args)
    manifest, blob = dataset_paths(_require(args, "data"))
    dataset = load_dataset(manifest, blob)
    split = make_split(dataset, seed=config.seed, fraction=args.fraction,
                       validation_share=args.val_share)
    teacher = None
    if config.method in ("pi_distill", "self_distill"):
        if args.teacher is None:
            raise ConfigError(f"{config.method} requires --teacher")
        teacher = load_checkpoint(*checkpoint_paths(args.teacher))
    elif args.teacher is not None:
        raise ConfigError(f"{config.method} takes no --teacher")
    if config.method == "teacher":
        result = train_teacher(dataset, split, config)
    else:
        result = train_student(dataset, split, config, teacher)
    out = out_path(_require(args, "out"))
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.checkpoint, out / "checkpoint.json",
                    out / "checkpoint.bin")
    with open(out / "log.csv", "w", encoding="utf-8", newline="") as handle:
        handle.write("epoch,split,metric,value\n")
        for epoch, part, metric, value in result.log:
            handle.write(f"{epoch},{part},{metric},{value!r}\n")
    run_record = {
        "config": config.to_dict(), "fraction": args.fraction,
        "val_share": args.val_share, "n_train": len(split.train),
        "n_val": len(split.validation), "split_hash": split_hash(split),
        "best_epoch": result.best_epoch, "val_auc": result.best_val["auc"],
        "val_auprc": result.best_val["auprc"], "wall_s": result.wall_s,
    }
    (out / "run.json").write_text(
        json.dumps(run_record, sort_keys=True, indent=2) + "\n",
        encoding="utf-8")
    print(f"best epoch {result.best_epoch}: "
          f"val auc {result.best_val['auc']:.6f}, "
          f"auprc {result.best_val['auprc']:.6f}; checkpoint in {out}")
    return 0


def cmd_sweep(args) -> int:
    manifest, blob = dataset_paths(_require(args, "data"))
    config = SweepConfig(
        manifest_path=str(manifest), blob_path=str(blob),
        output_dir=str(out_path(_require(args, "out"))),
        methods=tuple(_require(args, "methods").split(",")),
        fractions=tuple(_floats(_require(args, "fractions"))),
        seeds=tuple(_ints(_require(args, "seeds"))),
        epochs_by_fraction=_epochs_table(_require(args, "epochs")),
        validation_share=args.val_share, head_variant=args.head,
        lam=args.lam, tau=args.tau, learning_rate=args.lr,
        batch_size=args.batch_size, auc_averaging=args.auc_averaging,
        level=args.level)
    plan = plan_sweep(config)
    if args.dry_run:
        for cell in plan:
            print(f"{cell.run_id}  epochs={cell.epochs}")
        print(f"total {len(plan)} cells "
              f"({sum(c.role == 'dependency' for c in plan)} dependencies)")
        return 0
    outcome = run_sweep(config, workers=args.workers)
    print(f"{outcome.trained} trained, {outcome.skipped} reused, "
          f"{len(outcome.failures)} failed; results in "
          f"{outcome.results_path}")
    for failure in outcome.failures:
        print(f"failed {failure['run_id']}: {failure['reason']}",
              file=sys.stderr)
    return 1 if outcome.failures else 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(*checkpoint_paths(_require(args, "checkpoint")))
    manifest, blob = dataset_paths(_require(args, "data"))
    dataset = load_dataset(manifest, blob)
    split = make_split(dataset, seed=_require(args, "seed"),
                       fraction=args.fraction,
                       validation_share=args.val_share)
    model = rebuild_model(ckpt)
    indices = split.validation if args.split == "val" else split.train
    scored = collect_scores(model, dataset, sorted(indices))
    metrics = score_metrics(scored, args.auc_averaging)
    print(f"{args.split} auc {metrics['auc']!r}, auprc {metrics['auprc']!r} "
          f"({len(indices)} samples)")
    if args.split == "val":
        delta = metrics["auc"] - ckpt.val_auc
        print(f"checkpoint recorded val auc {ckpt.val_auc!r} "
              f"(delta {delta:+.3e})")
    return 0


def cmd_inspect(args) -> int:
    manifest, blob = dataset_paths(_require(args, "data"))
    try:
        dataset = load_dataset(manifest, blob)
    except LoadError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return 1
    image_tokens = sorted({r.image.shape[0] for r in dataset.records})
    text_tokens = sorted({r.text.shape[0] for r in dataset.records
                          if r.text is not None})
    counts = {c: int((dataset.labels == c).sum())
              for c in range(dataset.n_classes)}
    print(f"samples: {len(dataset)}")
    print(f"classes: {dataset.n_classes} (counts {counts})")
    print(f"d_image: {dataset.d_image} "
          f"(tokens {image_tokens[0]}..{image_tokens[-1]})")
    if dataset.has_text:
        print(f"d_text: {dataset.d_text} "
              f"(tokens {text_tokens[0]}..{text_tokens[-1]})")
    else:
        print("d_text: none (image-only dataset)")
    print(f"groups: {len(set(dataset.group_ids))}")
    print(f"has_cls: {dataset.has_cls}")
    for key, value in sorted(dataset.provenance.items()):
        print(f"provenance.{key}: {value}")
    print("validation: ok")
    return 0


def cmd_plotdata(args) -> int:
    written = emit_plotdata(
        Path(_require(args, "results")), out_path(_require(args, "out")),
        curve_level=args.curve_level, bar_level=args.bar_level,
        figures=not args.skip_figures)
    for path in written:
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common_train_flags(parser) -> None:
    parser.add_argument("--lam", type=float, default=0.75,
                        help="distillation mixing weight")
    parser.add_argument("--tau", type=float, default=0.25,
                        help="teacher softening temperature")
    parser.add_argument("--lr", type=float, default=None,
                        help="override the per-head default learning rate")
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--head", choices=HEAD_VARIANTS, default="attention")
    parser.add_argument("--val-share", type=float, default=0.1)
    parser.add_argument("--auc-averaging", choices=("micro", "ovr"),
                        default="micro")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="pidistill",
        description="Train and evaluate image-only classifiers distilled "
                    "from privileged image+report teachers on frozen "
                    "embeddings.")
    subparsers = parser.add_subparsers(dest="command", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}

    def sub(name: str, **kwargs):
        p = subparsers.add_parser(name, **kwargs)
        p.add_argument("--config", default=None,
                       help="JSON file supplying any flag; CLI overrides")
        registry[name] = p
        return p

    p = sub("synth", help="generate a synthetic causal-graph dataset")
    p.add_argument("--regime", choices=REGIMES)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--latent-dim", type=int, default=8)
    p.add_argument("--d-image", type=int, default=16)
    p.add_argument("--d-text", type=int, default=16)
    p.add_argument("--image-tokens", type=int, default=8)
    p.add_argument("--text-tokens", type=int, default=8)
    p.add_argument("--image-noise", type=float, default=1.0)
    p.add_argument("--text-noise", type=float, default=0.5)
    p.add_argument("--label-noise", type=float, default=0.0)
    p.add_argument("--n-classes", type=int, default=2)
    p.add_argument("--out", help="output directory")

    p = sub("train", help="run one training cell")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--teacher", default=None,
                   help="teacher checkpoint (manifest path or directory)")
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--eval-train", action="store_true",
                   help="also log training-set metrics each epoch")
    p.add_argument("--out", help="output directory")
    _add_common_train_flags(p)

    p = sub("sweep", help="run a method x fraction x seed grid")
    p.add_argument("--data")
    p.add_argument("--methods", help="comma-separated method list")
    p.add_argument("--fractions", help="comma-separated fractions")
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--epochs", help="table like 0.05=40,1.0=10")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--level", type=float, default=0.95,
                   help="confidence level for summary intervals")
    p.add_argument("--dry-run", action="store_true",
                   help="print the cell plan without training")
    p.add_argument("--out")
    _add_common_train_flags(p)

    p = sub("eval", help="recompute metrics from a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--seed", type=int)
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--val-share", type=float, default=0.1)
    p.add_argument("--split", choices=("val", "train"), default="val")
    p.add_argument("--auc-averaging", choices=("micro", "ovr"),
                   default="micro")

    p = sub("inspect", help="validate a dataset and print its manifest")
    p.add_argument("--data")

    p = sub("plotdata", help="emit figure tables and plots from results")
    p.add_argument("--results", help="path to a sweep results.csv")
    p.add_argument("--curve-level", type=float, default=0.90)
    p.add_argument("--bar-level", type=float, default=0.95)
    p.add_argument("--skip-figures", action="store_true",
                   help="write only the CSV tables")
    p.add_argument("--out")

    return parser, registry


HANDLERS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "eval": cmd_eval,
    "inspect": cmd_inspect,
    "plotdata": cmd_plotdata,
}


def _apply_config_file(parser, registry, args, argv):
    """Re-parse with config-file values as defaults; CLI flags win."""
    try:
        loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    if not isinstance(loaded, dict):
        raise ConfigError("config file must hold a JSON object")
    subparser = registry[args.command]
    known = {action.dest for action in subparser._actions}
    known -= {"help", "config"}
    defaults = {}
    for key, value in loaded.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise ConfigError(f"unknown config key {key!r} for "
                              f"{args.command!r}")
        defaults[dest] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser, registry = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config is not None:
            args = _apply_config_file(parser, registry, args, argv)
        return HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except PidistillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
