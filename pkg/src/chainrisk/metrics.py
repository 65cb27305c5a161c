"""Ranking metrics: AUC (Mann-Whitney, ties at half credit) and the
Kolmogorov-Smirnov statistic over the class-conditional score CDFs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, UndefinedMetric


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise InvalidArgument(f"length mismatch: {scores.shape} vs {labels.shape}")
    if not np.all(np.isfinite(scores)):
        raise InvalidArgument("scores contain non-finite values")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("both classes must be present")
    return scores, pos, n_pos, n_neg


def _midranks(sorted_values, n):
    """1-based average ranks for an ascending array with ties."""
    starts = np.r_[0, np.flatnonzero(np.diff(sorted_values)) + 1]
    ends = np.r_[starts[1:], n]
    mid = (starts + ends + 1) / 2.0
    return np.repeat(mid, ends - starts)


def auc(scores, labels):
    """P(score of random positive > score of random negative), ties count 0.5.

    Computed by rank sum in O(n log n); identical to the pairwise count.
    """
    scores, pos, n_pos, n_neg = _check_binary(scores, labels)
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    ranks[order] = _midranks(scores[order], scores.size)
    u_stat = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


def ks(scores, labels):
    """Max gap between the positive and negative empirical score CDFs.

    Both CDFs are step functions, so the maximum occurs at a sample point;
    evaluating at every distinct score is exact.
    """
    scores, pos, n_pos, n_neg = _check_binary(scores, labels)
    order = np.argsort(scores, kind="mergesort")
    y = pos[order]
    s = scores[order]
    cdf_pos = np.cumsum(y) / n_pos
    cdf_neg = np.cumsum(~y) / n_neg
    group_end = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    return float(np.max(np.abs(cdf_pos[group_end] - cdf_neg[group_end])))


def roc_points(scores, labels):
    """(fpr, tpr) pairs swept over descending distinct thresholds.

    Starts at (0, 0) and ends at (1, 1); ready for plotting or the TSV dump.
    """
    scores, pos, n_pos, n_neg = _check_binary(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    y = pos[order]
    s = scores[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    group_end = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    fpr = np.r_[0.0, fp[group_end] / n_neg]
    tpr = np.r_[0.0, tp[group_end] / n_pos]
    return np.column_stack([fpr, tpr])


@dataclass
class EvalReport:
    """AUC and KS for one task split, with class counts."""

    auc: float
    ks: float
    split: str
    num_pos: int
    num_neg: int

    @classmethod
    def from_scores(cls, scores, labels, split):
        labels = np.asarray(labels)
        return cls(
            auc=auc(scores, labels),
            ks=ks(scores, labels),
            split=split,
            num_pos=int(np.sum(labels == 1)),
            num_neg=int(np.sum(labels != 1)),
        )

    def to_dict(self):
        return {
            "split": self.split,
            "auc": self.auc,
            "ks": self.ks,
            "num_pos": self.num_pos,
            "num_neg": self.num_neg,
        }
