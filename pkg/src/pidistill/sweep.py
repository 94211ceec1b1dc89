"""Experiment sweeps over (method x fraction x seed) with dependency cells.

A sweep executes one training cell per requested method/fraction/seed
combination, plus dependency cells that produce the frozen teachers:
``pi_distill`` consumes a multimodal teacher checkpoint and ``self_distill``
an image-only one, each trained once per (fraction, seed) and shared.

Every cell leaves a JSON result record under ``runs/``; a cell whose record
already exists is skipped, so re-invoking a finished sweep trains nothing
and rewrites byte-identical tables. Failed cells are recorded with a reason
and the sweep continues. Tables are written atomically (temp file + rename)
in canonical plan order.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .data import EmbeddingDataset, load_dataset, make_split, split_hash
from .errors import ConfigError, PidistillError
from .metrics import aggregate
from .training import METHODS, TrainConfig, train_student, train_teacher

log = logging.getLogger(__name__)

RESULTS_HEADER = ("run_id", "method", "head", "fraction", "n_train", "seed",
                  "split_hash", "best_epoch", "val_auc", "val_auprc", "wall_s")
SUMMARY_HEADER = ("method", "fraction", "n_train", "metric", "mean", "sd",
                  "ci_lo", "ci_hi", "level", "n_seeds")
FAILURES_HEADER = ("run_id", "method", "fraction", "seed", "reason")

# method -> the method whose checkpoint it distills from
DEPENDENCIES = {"pi_distill": "teacher", "self_distill": "image_only"}


def _fmt(value: float) -> str:
    """Canonical shortest decimal form, used in ids and table cells."""
    return repr(float(value))


@dataclass(frozen=True)
class SweepConfig:
    manifest_path: str
    blob_path: str
    output_dir: str
    methods: tuple[str, ...]
    fractions: tuple[float, ...]
    seeds: tuple[int, ...]
    epochs_by_fraction: tuple[tuple[float, int], ...]
    validation_share: float = 0.1
    head_variant: str = "attention"
    lam: float = 0.75
    tau: float = 0.25
    learning_rate: float | None = None
    batch_size: int = 64
    dropout_p: float = 0.2
    qkv_bias: bool = False
    scale_scores: bool = True
    auc_averaging: str = "micro"
    level: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "fractions",
                          tuple(float(f) for f in self.fractions))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if isinstance(self.epochs_by_fraction, dict):
            pairs = tuple(sorted(
                (float(f), int(e)) for f, e in self.epochs_by_fraction.items()))
        else:
            pairs = tuple(sorted(
                (float(f), int(e)) for f, e in self.epochs_by_fraction))
        object.__setattr__(self, "epochs_by_fraction", pairs)
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("duplicate methods")
        if not self.fractions:
            raise ConfigError("fractions must be non-empty")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        table = dict(self.epochs_by_fraction)
        for f in self.fractions:
            if f not in table:
                raise ConfigError(f"no epochs entry for fraction {f}")
            if table[f] < 1:
                raise ConfigError(f"epochs for fraction {f} must be >= 1")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("level must be in (0, 1)")

    def epochs_for(self, fraction: float) -> int:
        return dict(self.epochs_by_fraction)[float(fraction)]

    def train_config(self, method: str, seed: int, epochs: int) -> TrainConfig:
        return TrainConfig(
            method=method, epochs=epochs, seed=seed, lam=self.lam,
            tau=self.tau, learning_rate=self.learning_rate,
            batch_size=self.batch_size, head_variant=self.head_variant,
            dropout_p=self.dropout_p, qkv_bias=self.qkv_bias,
            scale_scores=self.scale_scores, auc_averaging=self.auc_averaging)


@dataclass(frozen=True)
class SweepCell:
    role: str      # "method" for requested rows, "dependency" for teachers
    method: str
    fraction: float
    seed: int
    epochs: int

    @property
    def artifact(self) -> str:
        return f"{self.method}__f{_fmt(self.fraction)}__s{self.seed}"

    @property
    def run_id(self) -> str:
        if self.role == "dependency":
            return f"dep__{self.artifact}"
        return self.artifact

    @property
    def teacher_artifact(self) -> str | None:
        source = DEPENDENCIES.get(self.method)
        if source is None:
            return None
        return f"{source}__f{_fmt(self.fraction)}__s{self.seed}"


def plan_sweep(config: SweepConfig) -> list[SweepCell]:
    """Canonical cell order: dependency teachers first, then method cells."""
    cells: list[SweepCell] = []
    needed = [DEPENDENCIES[m] for m in ("pi_distill", "self_distill")
              if m in config.methods]
    for fraction in config.fractions:
        epochs = config.epochs_for(fraction)
        for seed in config.seeds:
            for source in needed:
                cells.append(SweepCell("dependency", source, fraction, seed,
                                       epochs))
    for method in config.methods:
        for fraction in config.fractions:
            epochs = config.epochs_for(fraction)
            for seed in config.seeds:
                cells.append(SweepCell("method", method, fraction, seed,
                                       epochs))
    return cells


@dataclass
class SweepOutcome:
    rows: list[dict]
    failures: list[dict]
    results_path: Path
    summary_path: Path
    trained: int = 0
    skipped: int = 0

    @property
    def ok(self) -> bool:
        return not self.failures


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    from io import StringIO
    buffer = StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _write_log(path: Path, log_rows) -> None:
    rows = [(epoch, split, metric, _fmt(value))
            for epoch, split, metric, value in log_rows]
    _atomic_write(path, _csv_text(("epoch", "split", "metric", "value"), rows))


class _Executor:
    """Runs one sweep invocation against an output directory."""

    def __init__(self, config: SweepConfig, dataset: EmbeddingDataset):
        self.config = config
        self.dataset = dataset
        self.out = Path(config.output_dir)
        self.runs_dir = self.out / "runs"
        self.ckpt_dir = self.out / "checkpoints"
        self.log_dir = self.out / "logs"
        for d in (self.runs_dir, self.ckpt_dir, self.log_dir):
            d.mkdir(parents=True, exist_ok=True)
        self.trained = 0
        self.skipped = 0
        self._lock = threading.Lock()

    def _count(self, attr: str) -> None:
        with self._lock:
            setattr(self, attr, getattr(self, attr) + 1)

    def _artifact_paths(self, artifact: str):
        return (self.ckpt_dir / f"{artifact}.json",
                self.ckpt_dir / f"{artifact}.bin",
                self.ckpt_dir / f"{artifact}.result.json")

    def _train_artifact(self, cell: SweepCell) -> dict:
        """Train the cell's model once and persist checkpoint + metrics."""
        manifest, blob, result_path = self._artifact_paths(cell.artifact)
        if result_path.exists():
            return json.loads(result_path.read_text(encoding="utf-8"))
        split = make_split(self.dataset, seed=cell.seed,
                           fraction=cell.fraction,
                           validation_share=self.config.validation_share)
        train_cfg = self.config.train_config(cell.method, cell.seed,
                                             cell.epochs)
        teacher = None
        if cell.teacher_artifact is not None:
            t_manifest, t_blob, t_result = self._artifact_paths(
                cell.teacher_artifact)
            if not t_result.exists():
                raise ConfigError(
                    f"missing dependency checkpoint {cell.teacher_artifact}")
            teacher = load_checkpoint(t_manifest, t_blob)
        if cell.method == "teacher":
            result = train_teacher(self.dataset, split, train_cfg)
        else:
            result = train_student(self.dataset, split, train_cfg, teacher)
        self._count("trained")
        save_checkpoint(result.checkpoint, manifest, blob)
        _write_log(self.log_dir / f"{cell.artifact}.csv", result.log)
        record = {
            "best_epoch": result.best_epoch,
            "val_auc": result.best_val["auc"],
            "val_auprc": result.best_val["auprc"],
            "n_train": len(split.train),
            "split_hash": split_hash(split),
            "train_wall_s": result.wall_s,
        }
        _atomic_write(result_path,
                      json.dumps(record, sort_keys=True, indent=2) + "\n")
        return record

    def run_cell(self, cell: SweepCell) -> dict:
        run_path = self.runs_dir / f"{cell.run_id}.json"
        if run_path.exists():
            record = json.loads(run_path.read_text(encoding="utf-8"))
            if record.get("status") == "ok":
                self._count("skipped")
                return record
        start = time.perf_counter()
        head = self.config.head_variant if cell.method != "teacher" \
            else "attention"
        identity = {
            "run_id": cell.run_id, "method": cell.method, "head": head,
            "fraction": cell.fraction, "seed": cell.seed, "role": cell.role,
        }
        try:
            artifact = self._train_artifact(cell)
        except PidistillError as exc:
            log.warning("cell %s failed: %s", cell.run_id, exc)
            record = {**identity, "status": "failed", "reason": str(exc)}
        else:
            record = {
                **identity, "status": "ok",
                "n_train": artifact["n_train"],
                "split_hash": artifact["split_hash"],
                "best_epoch": artifact["best_epoch"],
                "val_auc": artifact["val_auc"],
                "val_auprc": artifact["val_auprc"],
                "wall_s": time.perf_counter() - start,
            }
        _atomic_write(run_path,
                      json.dumps(record, sort_keys=True, indent=2) + "\n")
        return record

    def run_stage(self, cells, workers: int) -> list[dict]:
        if workers <= 1 or len(cells) <= 1:
            return [self.run_cell(c) for c in cells]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self.run_cell, cells))


def results_rows(records) -> list[tuple]:
    rows = []
    for r in records:
        if r.get("status") != "ok":
            continue
        rows.append((r["run_id"], r["method"], r["head"], _fmt(r["fraction"]),
                     r["n_train"], r["seed"], r["split_hash"], r["best_epoch"],
                     _fmt(r["val_auc"]), _fmt(r["val_auprc"]),
                     _fmt(r["wall_s"])))
    return rows


def summarize(records, config: SweepConfig) -> list[tuple]:
    """One row per (method, fraction, metric) over the requested cells.

    Dependency cells are excluded so each seed contributes exactly once.
    """
    rows = []
    for method in config.methods:
        for fraction in config.fractions:
            group = [r for r in records
                     if r.get("status") == "ok" and r["role"] == "method"
                     and r["method"] == method and r["fraction"] == fraction]
            if not group:
                continue
            n_train = round(sum(r["n_train"] for r in group) / len(group))
            for metric, key in (("auc", "val_auc"), ("auprc", "val_auprc")):
                summary = aggregate([r[key] for r in group],
                                    level=config.level)
                sd = "" if summary.sd is None else _fmt(summary.sd)
                lo = "" if summary.half_width is None else _fmt(summary.lo)
                hi = "" if summary.half_width is None else _fmt(summary.hi)
                rows.append((method, _fmt(fraction), n_train, metric,
                             _fmt(summary.mean), sd, lo, hi,
                             _fmt(config.level), len(group)))
    return rows


def run_sweep(config: SweepConfig, workers: int = 1) -> SweepOutcome:
    dataset = load_dataset(config.manifest_path, config.blob_path)
    cells = plan_sweep(config)
    executor = _Executor(config, dataset)
    by_id = {}
    for role in ("dependency", "method"):
        stage = [c for c in cells if c.role == role]
        for record in executor.run_stage(stage, workers):
            by_id[record["run_id"]] = record
    records = [by_id[c.run_id] for c in cells]

    results_path = executor.out / "results.csv"
    summary_path = executor.out / "summary.csv"
    _atomic_write(results_path, _csv_text(RESULTS_HEADER,
                                          results_rows(records)))
    _atomic_write(summary_path, _csv_text(SUMMARY_HEADER,
                                          summarize(records, config)))
    failures = [r for r in records if r.get("status") != "ok"]
    failures_path = executor.out / "failures.csv"
    if failures:
        _atomic_write(failures_path, _csv_text(
            FAILURES_HEADER,
            [(r["run_id"], r["method"], _fmt(r["fraction"]), r["seed"],
              r["reason"]) for r in failures]))
    elif failures_path.exists():
        failures_path.unlink()
    return SweepOutcome(rows=records, failures=failures,
                        results_path=results_path, summary_path=summary_path,
                        trained=executor.trained, skipped=executor.skipped)
