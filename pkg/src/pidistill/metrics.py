"""Ranking metrics (AUC-ROC, AUPRC) and cross-seed aggregation.

AUC uses the Mann-Whitney rank statistic with midrank tie handling; AUPRC is
average precision (right-step interpolation) with tie grouping. Multiclass
averaging: ``ovr`` is the unweighted mean of per-class one-vs-rest AUCs,
``micro`` flattens the N x C one-hot label and score matrices into N*C binary
pairs. All functions are pure.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigError, DataError, ShapeError, UndefinedMetricError

ROW_SUM_TOL = 1e-6


@dataclass(frozen=True)
class ScoredSet:
    """Per-sample class probabilities plus integer labels.

    scores: N x C, rows summing to 1 within ROW_SUM_TOL. labels: length N,
    values in [0, C).
    """

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels)
        if scores.ndim != 2:
            raise ShapeError(f"scores must be N x C, got ndim={scores.ndim}")
        n, c = scores.shape
        if n < 1:
            raise DataError("ScoredSet needs at least one sample")
        if c < 2:
            raise DataError(f"ScoredSet needs >= 2 classes, got {c}")
        if labels.shape != (n,):
            raise ShapeError(
                f"labels shape {labels.shape} does not match {n} samples")
        if not np.issubdtype(labels.dtype, np.integer):
            raise DataError("labels must be integers")
        if labels.min() < 0 or labels.max() >= c:
            raise DataError(f"labels must lie in [0, {c})")
        if not np.isfinite(scores).all():
            raise DataError("scores contain non-finite values")
        row_sums = scores.sum(axis=1)
        if np.abs(row_sums - 1.0).max() > ROW_SUM_TOL:
            worst = float(np.abs(row_sums - 1.0).max())
            raise DataError(
                f"score rows must sum to 1 within {ROW_SUM_TOL}, worst off by {worst:.2e}")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    @property
    def n_classes(self) -> int:
        return self.scores.shape[1]


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the mean rank of their block."""
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(values.shape[0], dtype=np.float64)
    i = 0
    n = values.shape[0]
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i: j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc_binary(scores, positives) -> float:
    """P(score_pos > score_neg) + 1/2 P(tie), by midrank rank-sum."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    pos = np.asarray(positives, dtype=bool).reshape(-1)
    if s.shape != pos.shape:
        raise ShapeError(f"scores {s.shape} vs positives {pos.shape}")
    if s.shape[0] < 2:
        raise UndefinedMetricError("AUC needs at least two samples")
    if not np.isfinite(s).all():
        raise DataError("AUC scores contain non-finite values")
    n_pos = int(pos.sum())
    n_neg = s.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUC undefined: {n_pos} positives, {n_neg} negatives")
    ranks = _midranks(s)
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auc_multiclass(scored: ScoredSet, averaging: str = "ovr") -> float:
    if averaging == "ovr":
        present = np.unique(scored.labels)
        vals = []
        for c in range(scored.n_classes):
            if c not in present:
                warnings.warn(
                    f"class {c} absent from labels; skipped in ovr AUC",
                    stacklevel=2)
                continue
            vals.append(auc_binary(scored.scores[:, c], scored.labels == c))
        if not vals:
            raise UndefinedMetricError("no class defined for ovr AUC")
        return float(np.mean(vals))
    if averaging == "micro":
        onehot = np.zeros_like(scored.scores, dtype=bool)
        onehot[np.arange(scored.labels.shape[0]), scored.labels] = True
        return auc_binary(scored.scores.reshape(-1), onehot.reshape(-1))
    raise ConfigError(f"unknown AUC averaging {averaging!r}")


def auprc_binary(scores, positives) -> float:
    """Average precision: sum over descending thresholds of dR * P.

    Tied scores enter together, so the curve never depends on input order.
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    pos = np.asarray(positives, dtype=bool).reshape(-1)
    if s.shape != pos.shape:
        raise ShapeError(f"scores {s.shape} vs positives {pos.shape}")
    if not np.isfinite(s).all():
        raise DataError("AUPRC scores contain non-finite values")
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPRC undefined with no positives")
    order = np.argsort(-s, kind="stable")
    sorted_scores = s[order]
    sorted_pos = pos[order]
    ap = 0.0
    cum_pos = 0
    cum_total = 0
    prev_recall = 0.0
    i = 0
    n = s.shape[0]
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        cum_pos += int(sorted_pos[i: j + 1].sum())
        cum_total += j - i + 1
        recall = cum_pos / n_pos
        precision = cum_pos / cum_total
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return ap


def auprc(scored: ScoredSet, averaging: str = "micro") -> float:
    if averaging == "binary":
        if scored.n_classes != 2:
            raise ConfigError(
                f"binary AUPRC needs 2 classes, got {scored.n_classes}")
        return auprc_binary(scored.scores[:, 1], scored.labels == 1)
    if averaging == "micro":
        onehot = np.zeros_like(scored.scores, dtype=bool)
        onehot[np.arange(scored.labels.shape[0]), scored.labels] = True
        return auprc_binary(scored.scores.reshape(-1), onehot.reshape(-1))
    raise ConfigError(f"unknown AUPRC averaging {averaging!r}")


@dataclass(frozen=True)
class MetricSummary:
    """Cross-seed mean with a Student-t confidence interval."""

    values: tuple[float, ...]
    mean: float
    sd: float | None
    half_width: float | None
    level: float
    n: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n", len(self.values))

    @property
    def lo(self) -> float | None:
        return None if self.half_width is None else self.mean - self.half_width

    @property
    def hi(self) -> float | None:
        return None if self.half_width is None else self.mean + self.half_width


def aggregate(values, level: float = 0.95) -> MetricSummary:
    """Mean, sample sd (ddof=1), and mean +/- t_{n-1} * sd / sqrt(n).

    Curves report the 90% level, bar comparisons 95%. With a single value
    the sd and interval are undefined and returned as None.
    """
    vals = tuple(float(v) for v in values)
    if len(vals) == 0:
        raise DataError("aggregate needs at least one value")
    if not 0.0 < level < 1.0:
        raise ConfigError(f"CI level must be in (0, 1), got {level}")
    if not all(np.isfinite(vals)):
        raise DataError("aggregate values contain non-finite entries")
    n = len(vals)
    if len(set(vals)) == 1:
        # exact path: identical inputs must give exactly zero spread
        if n < 2:
            return MetricSummary(vals, vals[0], None, None, level)
        return MetricSummary(vals, vals[0], 0.0, 0.0, level)
    mean = float(np.mean(vals))
    sd = float(np.std(vals, ddof=1))
    t_crit = float(stats.t.ppf(0.5 + level / 2.0, df=n - 1))
    return MetricSummary(vals, mean, sd, t_crit * sd / np.sqrt(n), level)
