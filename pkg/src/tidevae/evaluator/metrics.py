"""ROC/AUC and stratified k-fold splitting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..engine.rng import Rng


@dataclass
class RocResult:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def roc_auc(scores, labels) -> RocResult:
    """ROC by sweeping every distinct score, tied scores moving TPR and FPR together.

    The trapezoid area is accumulated in integer counts, so it equals the
    Mann-Whitney statistic (ties counted 1/2) divided by P*N.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores and labels must be 1-d and equally long, got {s.shape} and {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary 0/1")
    pos = int((y == 1).sum())
    neg = int((y == 0).sum())
    if pos == 0 or neg == 0:
        raise ValueError("ROC needs both classes present")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.r_[0, np.cumsum(y == 1)[last]].astype(np.int64)
    fp = np.r_[0, np.cumsum(y == 0)[last]].astype(np.int64)
    twice_area = int(((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])).sum())
    auc = twice_area / (2 * pos * neg)
    return RocResult(fp / neg, tp / pos, np.r_[np.inf, s[last]], auc)


@dataclass
class AucSummary:
    aucs: np.ndarray
    mean: float
    std: float

    @classmethod
    def of(cls, aucs: Sequence[float]) -> "AucSummary":
        a = np.asarray(aucs, dtype=np.float64)
        return cls(a, float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0)

    def __str__(self) -> str:
        return f"{100 * self.mean:.1f} ± {100 * self.std:.1f}"


def stratified_kfold(labels, k: int, seed: int = 0) -> list[np.ndarray]:
    """k disjoint folds covering all indices with per-class counts within 1 of proportional.

    Indices of each class are shuffled, then dealt into folds in contiguous
    near-equal chunks. The folds that receive a class's spare elements
    rotate from class to class so fold sizes stay balanced too.
    """
    y = np.asarray(labels)
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = Rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    start = 0
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if len(idx) < k:
            raise ValueError(f"class {cls} has {len(idx)} samples, fewer than k={k}")
        idx = idx[rng.permutation(len(idx))]
        base, extra = divmod(len(idx), k)
        sizes = np.full(k, base)
        sizes[(start + np.arange(extra)) % k] += 1
        start = (start + extra) % k
        pos = 0
        for f in range(k):
            folds[f].extend(idx[pos:pos + sizes[f]].tolist())
            pos += sizes[f]
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]
