"""Macro-averaged metrics, confusion matrix and one-vs-rest ROC/AUC."""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .dataset import N_CLASSES


class MetricWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MacroMetrics:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    precision: tuple
    recall: tuple
    f1: tuple


def _check(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise ValueError("empty label vectors")
    return y_true, y_pred


def confusion_matrix(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    """Entry (i, j) counts samples of true class i predicted as j."""
    y_true, y_pred = _check(y_true, y_pred)
    if min(y_true.min(), y_pred.min()) < 0 or max(y_true.max(), y_pred.max()) >= n_classes:
        raise ValueError(f"class codes must lie in 0..{n_classes - 1}")
    flat = np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes)
    return flat.reshape(n_classes, n_classes)


def macro_metrics(y_true, y_pred, labels: Sequence[int] = range(N_CLASSES)) -> MacroMetrics:
    """Unweighted mean of per-class precision, recall and F1 over ``labels``.

    Empty denominators count as 0 (with a warning), so a class missing from
    both vectors pulls every macro average down.
    """
    y_true, y_pred = _check(y_true, y_pred)
    labels = list(labels)
    prec, rec, f1 = [], [], []
    empty = []
    for c in labels:
        tp = int(np.sum((y_true == c) & (y_pred == c)))
        fp = int(np.sum((y_true != c) & (y_pred == c)))
        fn = int(np.sum((y_true == c) & (y_pred != c)))
        if tp + fp == 0 or tp + fn == 0:
            empty.append(c)
        prec.append(tp / (tp + fp) if tp + fp else 0.0)
        rec.append(tp / (tp + fn) if tp + fn else 0.0)
        f1.append(2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0)
    if empty:
        warnings.warn(f"classes {empty} have no predicted or no true members; scored as 0",
                      MetricWarning, stacklevel=2)
    return MacroMetrics(
        accuracy=float(np.mean(y_true == y_pred)),
        macro_precision=float(np.mean(prec)),
        macro_recall=float(np.mean(rec)),
        macro_f1=float(np.mean(f1)),
        precision=tuple(prec),
        recall=tuple(rec),
        f1=tuple(f1),
    )


def _check_scores(y_true, scores):
    y_true = np.asarray(y_true, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != y_true.shape[0]:
        raise ValueError("scores must be N x n_classes")
    if not np.allclose(scores.sum(axis=1), 1.0, rtol=0, atol=1e-9):
        raise ValueError("score rows must sum to 1")
    return y_true, scores


def binary_auc(positive, score) -> Optional[float]:
    """Mann-Whitney AUC with tied scores sharing their average rank."""
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(score, method="average")
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc_ovr(y_true, scores) -> list[Optional[float]]:
    """One AUC per class column; ``None`` where the class is absent (or is everything)."""
    y_true, scores = _check_scores(y_true, scores)
    return [binary_auc(y_true == c, scores[:, c]) for c in range(scores.shape[1])]


def roc_curve(positive, score) -> tuple[np.ndarray, np.ndarray]:
    """False/true positive rates at every distinct threshold, starting from (0, 0)."""
    positive = np.asarray(positive, dtype=bool)
    score = np.asarray(score, dtype=np.float64)
    order = np.argsort(-score, kind="stable")
    s, p = score[order], positive[order]
    tps = np.cumsum(p)
    fps = np.cumsum(~p)
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    n_pos, n_neg = max(int(p.sum()), 1), max(int((~p).sum()), 1)
    fpr = np.r_[0.0, fps[last] / n_neg]
    tpr = np.r_[0.0, tps[last] / n_pos]
    return fpr, tpr


def roc_points_csv(y_true, scores) -> str:
    """``class,fpr,tpr`` rows for each class present in ``y_true``."""
    y_true, scores = _check_scores(y_true, scores)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["class", "fpr", "tpr"])
    for c in range(scores.shape[1]):
        pos = y_true == c
        if not pos.any() or pos.all():
            continue
        fpr, tpr = roc_curve(pos, scores[:, c])
        for a, b in zip(fpr, tpr):
            w.writerow([c, repr(float(a)), repr(float(b))])
    return buf.getvalue()
