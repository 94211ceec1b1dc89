"""Figure-ready tables and rendered plots from a sweep's results table.

Two views per metric, mirroring the evaluation layouts the engine targets:
sample-efficiency curves (x = training-set size, log scale, CI bands) and
bar tables holding per-method means plus paired distill-minus-baseline
differences, where pairing subtracts per seed before averaging.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import DataError
from .metrics import aggregate
from .sweep import _atomic_write, _csv_text, _fmt

CURVES_HEADER = ("method", "fraction", "n_train", "mean", "ci_lo", "ci_hi",
                 "level", "n_seeds")
BARS_HEADER = ("method", "baseline", "fraction", "n_train", "mean", "ci_lo",
               "ci_hi", "level", "n_seeds")
METRICS = (("auc", "val_auc"), ("auprc", "val_auprc"))
DIFF_PAIRS = (("pi_distill", "image_only"), ("self_distill", "image_only"),
              ("pi_distill", "self_distill"))


def read_results(path) -> list[dict]:
    """Parse a results table back into typed row dicts."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        rows = []
        for raw in reader:
            rows.append({
                "run_id": raw["run_id"], "method": raw["method"],
                "head": raw["head"], "fraction": float(raw["fraction"]),
                "n_train": int(raw["n_train"]), "seed": int(raw["seed"]),
                "split_hash": raw["split_hash"],
                "best_epoch": int(raw["best_epoch"]),
                "val_auc": float(raw["val_auc"]),
                "val_auprc": float(raw["val_auprc"]),
                "wall_s": float(raw["wall_s"]),
            })
    return rows


def method_rows(rows) -> list[dict]:
    """Drop dependency-teacher rows so each seed counts once per method."""
    return [r for r in rows if not r["run_id"].startswith("dep__")]


def _grid(rows):
    methods = sorted({r["method"] for r in rows})
    fractions = sorted({r["fraction"] for r in rows})
    return methods, fractions


def _select(rows, method, fraction):
    return sorted((r for r in rows
                   if r["method"] == method and r["fraction"] == fraction),
                  key=lambda r: r["seed"])


def _mean_n_train(group) -> int:
    return round(sum(r["n_train"] for r in group) / len(group))


def curves_table(rows, value_key: str, level: float) -> list[tuple]:
    methods, fractions = _grid(rows)
    out = []
    for method in methods:
        for fraction in fractions:
            group = _select(rows, method, fraction)
            if not group:
                continue
            summary = aggregate([r[value_key] for r in group], level=level)
            lo = _fmt(summary.lo) if summary.half_width is not None else ""
            hi = _fmt(summary.hi) if summary.half_width is not None else ""
            out.append((method, _fmt(fraction), _mean_n_train(group),
                        _fmt(summary.mean), lo, hi, _fmt(level), len(group)))
    return out


def paired_differences(rows, method: str, baseline: str, fraction: float,
                       value_key: str) -> list[float]:
    """Per-seed method-minus-baseline values for one fraction.

    Seeds must match on split hash: every method trains on the identical
    split for a given (fraction, seed).
    """
    left = {r["seed"]: r for r in _select(rows, method, fraction)}
    right = {r["seed"]: r for r in _select(rows, baseline, fraction)}
    diffs = []
    for seed in sorted(left.keys() & right.keys()):
        if left[seed]["split_hash"] != right[seed]["split_hash"]:
            raise DataError(
                f"split mismatch between {method} and {baseline} at "
                f"fraction {fraction}, seed {seed}")
        diffs.append(left[seed][value_key] - right[seed][value_key])
    return diffs


def bars_table(rows, value_key: str, level: float) -> list[tuple]:
    methods, fractions = _grid(rows)
    out = []
    for method in methods:
        for fraction in fractions:
            group = _select(rows, method, fraction)
            if not group:
                continue
            summary = aggregate([r[value_key] for r in group], level=level)
            lo = _fmt(summary.lo) if summary.half_width is not None else ""
            hi = _fmt(summary.hi) if summary.half_width is not None else ""
            out.append((method, "", _fmt(fraction), _mean_n_train(group),
                        _fmt(summary.mean), lo, hi, _fmt(level), len(group)))
    for method, baseline in DIFF_PAIRS:
        if method not in methods or baseline not in methods:
            continue
        for fraction in fractions:
            diffs = paired_differences(rows, method, baseline, fraction,
                                       value_key)
            if not diffs:
                continue
            group = _select(rows, method, fraction)
            summary = aggregate(diffs, level=level)
            lo = _fmt(summary.lo) if summary.half_width is not None else ""
            hi = _fmt(summary.hi) if summary.half_width is not None else ""
            out.append((method, baseline, _fmt(fraction),
                        _mean_n_train(group), _fmt(summary.mean), lo, hi,
                        _fmt(level), len(diffs)))
    return out


def emit_plotdata(results_path, out_dir, curve_level: float = 0.90,
                  bar_level: float = 0.95, figures: bool = True
                  ) -> list[Path]:
    rows = method_rows(read_results(results_path))
    if not rows:
        raise DataError("results table has no method rows to plot")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for metric, key in METRICS:
        curves = curves_table(rows, key, curve_level)
        path = out / f"curves_{metric}.csv"
        _atomic_write(path, _csv_text(CURVES_HEADER, curves))
        written.append(path)
        bars = bars_table(rows, key, bar_level)
        path = out / f"bars_{metric}.csv"
        _atomic_write(path, _csv_text(BARS_HEADER, bars))
        written.append(path)
    if figures:
        written.extend(render_figures(rows, out, curve_level, bar_level))
    return written


# ---------------------------------------------------------------------------
# rendered figures


def _curve_points(rows, method, value_key, level):
    xs, means, los, his = [], [], [], []
    for fraction in sorted({r["fraction"] for r in rows}):
        group = _select(rows, method, fraction)
        if not group:
            continue
        summary = aggregate([r[value_key] for r in group], level=level)
        xs.append(_mean_n_train(group))
        means.append(summary.mean)
        half = summary.half_width or 0.0
        los.append(summary.mean - half)
        his.append(summary.mean + half)
    return xs, means, los, his


def _sample_efficiency_figure(rows, value_key: str, label: str,
                              level: float, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for method in sorted({r["method"] for r in rows}):
        xs, means, los, his = _curve_points(rows, method, value_key, level)
        if not xs:
            continue
        ax.plot(xs, means, marker="o", label=method)
        ax.fill_between(xs, los, his, alpha=0.2)
    ax.set_xscale("log")
    ax.set_xlabel("training samples")
    ax.set_ylabel(f"validation {label}")
    ax.set_title(f"sample efficiency ({int(round(level * 100))}% CI)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _gains_figure(rows, value_key: str, label: str, level: float,
                  path: Path) -> None:
    fractions = sorted({r["fraction"] for r in rows})
    methods = {r["method"] for r in rows}
    pairs = [(m, b) for m, b in DIFF_PAIRS if m in methods and b in methods]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    width = 0.8 / max(len(pairs), 1)
    for j, (method, baseline) in enumerate(pairs):
        centers, means, halves = [], [], []
        for i, fraction in enumerate(fractions):
            diffs = paired_differences(rows, method, baseline, fraction,
                                       value_key)
            if not diffs:
                continue
            summary = aggregate(diffs, level=level)
            centers.append(i + (j - (len(pairs) - 1) / 2.0) * width)
            means.append(summary.mean)
            halves.append(summary.half_width or 0.0)
        if centers:
            ax.bar(centers, means, width=width, yerr=halves, capsize=3,
                   label=f"{method} - {baseline}")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(range(len(fractions)))
    ax.set_xticklabels([_fmt(f) for f in fractions])
    ax.set_xlabel("training fraction")
    ax.set_ylabel(f"paired {label} difference")
    ax.set_title(f"distillation gains ({int(round(level * 100))}% CI)")
    if pairs:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_figures(rows, out_dir, curve_level: float = 0.90,
                   bar_level: float = 0.95) -> list[Path]:
    out = Path(out_dir)
    written = []
    for metric, key in METRICS:
        path = out / f"sample_efficiency_{metric}.png"
        _sample_efficiency_figure(rows, key, metric.upper(), curve_level,
                                  path)
        written.append(path)
    path = out / "distillation_gains_auc.png"
    _gains_figure(rows, "val_auc", "AUC", bar_level, path)
    written.append(path)
    return written
