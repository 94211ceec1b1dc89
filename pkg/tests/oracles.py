"""Brute-force reference implementations used only by the test suite.

Each function restates a metric from its definition (pairwise comparison,
threshold enumeration, textbook t-interval) with none of the sorting tricks
the library uses, so agreement is evidence rather than tautology.
"""

import numpy as np
from scipy import stats


def auc_pairwise(scores, positives) -> float:
    """Mean over all (pos, neg) pairs of win + half-tie."""
    s = np.asarray(scores, dtype=np.float64)
    pos_scores = s[np.asarray(positives, dtype=bool)]
    neg_scores = s[~np.asarray(positives, dtype=bool)]
    total = 0.0
    for p in pos_scores:
        for q in neg_scores:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos_scores) * len(neg_scores))


def auc_ovr_brute(scores, labels) -> float:
    """Unweighted mean of per-class pairwise AUCs over classes present."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    vals = []
    for c in range(scores.shape[1]):
        mask = labels == c
        if mask.any() and (~mask).any():
            vals.append(auc_pairwise(scores[:, c], mask))
    return float(np.mean(vals))


def auc_micro_brute(scores, labels) -> float:
    """Pairwise AUC over the flattened one-hot label / score matrices."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    onehot = np.zeros_like(scores, dtype=bool)
    onehot[np.arange(labels.shape[0]), labels] = True
    return auc_pairwise(scores.reshape(-1), onehot.reshape(-1))


def auprc_threshold_enum(scores, positives) -> float:
    """Average precision by explicit enumeration of score thresholds.

    For each distinct score t in descending order, predict positive where
    score >= t, then accumulate (recall step) * precision.
    """
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    n_pos = int(pos.sum())
    thresholds = np.unique(s)[::-1]
    ap = 0.0
    prev_recall = 0.0
    for t in thresholds:
        predicted = s >= t
        tp = int((predicted & pos).sum())
        precision = tp / int(predicted.sum())
        recall = tp / n_pos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def auprc_micro_brute(scores, labels) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    onehot = np.zeros_like(scores, dtype=bool)
    onehot[np.arange(labels.shape[0]), labels] = True
    return auprc_threshold_enum(scores.reshape(-1), onehot.reshape(-1))


def t_interval_oracle(values, level):
    """(mean, half_width) via scipy's interval API instead of a ppf formula."""
    vals = np.asarray(values, dtype=np.float64)
    mean = float(vals.mean())
    lo, hi = stats.t.interval(level, df=len(vals) - 1, loc=mean,
                              scale=stats.sem(vals))
    return mean, float((hi - lo) / 2.0)


def random_scores_with_ties(rng, n):
    """Continuous scores with a random fraction snapped onto a coarse grid."""
    s = rng.standard_normal(n)
    if rng.random() < 0.8:
        snap = rng.random(n) < rng.uniform(0.2, 0.8)
        s[snap] = np.round(s[snap] * 2.0) / 2.0
    return s
