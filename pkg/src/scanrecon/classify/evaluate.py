"""Stratified k-fold cross-validation and the evaluation report."""
from __future__ import annotations

import csv
import io
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .dataset import N_CLASSES, Dataset
from .metrics import confusion_matrix, macro_metrics, roc_auc_ovr, roc_points_csv
from .models import TrainerParams, train


@dataclass(frozen=True)
class FoldReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: np.ndarray
    auc_per_class: list

    def row(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
        }


@dataclass(frozen=True)
class EvalReport(FoldReport):
    algorithm: str = ""
    per_fold: tuple = ()
    labels: Optional[np.ndarray] = None
    scores: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            **self.row(),
            "confusion": self.confusion.tolist(),
            "auc_per_class": self.auc_per_class,
            "per_fold": [
                {**f.row(), "confusion": f.confusion.tolist(), "auc_per_class": f.auc_per_class}
                for f in self.per_fold
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def metrics_csv(self) -> str:
        """Flat ``scope,metric,value`` table: pooled rows first, then each fold."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["scope", "metric", "value"])

        def emit(scope, rep):
            for name, value in rep.row().items():
                w.writerow([scope, name, repr(value)])
            for c, auc in enumerate(rep.auc_per_class):
                w.writerow([scope, f"auc_class_{c}", "" if auc is None else repr(auc)])

        emit("pooled", self)
        for i, f in enumerate(self.per_fold):
            emit(f"fold{i}", f)
        return buf.getvalue()

    def roc_csv(self) -> str:
        return roc_points_csv(self.labels, self.scores)


def _report(y_true, y_pred, scores) -> FoldReport:
    with warnings.catch_warnings():
        # folds routinely miss a rare class; the zero convention is intended
        warnings.simplefilter("ignore")
        m = macro_metrics(y_true, y_pred)
    return FoldReport(
        accuracy=m.accuracy,
        macro_precision=m.macro_precision,
        macro_recall=m.macro_recall,
        macro_f1=m.macro_f1,
        confusion=confusion_matrix(y_true, y_pred),
        auc_per_class=roc_auc_ovr(y_true, scores),
    )


def stratified_folds(labels, k: int = 5, seed: int = 0) -> np.ndarray:
    """Fold number for every row.

    Rows of each class are shuffled, then dealt round-robin with one counter
    that carries over from class to class, so fold sizes differ by at most one.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(labels) < k:
        raise ValueError(f"{len(labels)} rows cannot fill {k} folds")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    folds = np.empty(len(labels), dtype=np.int64)
    counter = 0
    small = []
    for c in np.unique(labels):
        rows = np.flatnonzero(labels == c)
        if len(rows) < k:
            small.append(int(c))
        rows = rows[rng.permutation(len(rows))]
        folds[rows] = (counter + np.arange(len(rows))) % k
        counter += len(rows)
    if small:
        warnings.warn(f"classes {small} have fewer than {k} rows; some folds miss them",
                      stacklevel=2)
    return folds


def cross_validate(params: TrainerParams, ds: Dataset, k: int = 5, seed: int = 0,
                   n_jobs: int = 1) -> EvalReport:
    """Train on k-1 folds, score the held-out fold; report pooled and per-fold metrics.

    Each fold trains with its own child seed, so results do not depend on
    ``n_jobs``.
    """
    folds = stratified_folds(ds.labels, k, seed)
    fold_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(k)]
    inner = replace(params, n_jobs=1) if n_jobs > 1 else params

    def run(i):
        test = np.flatnonzero(folds == i)
        trainset = ds.subset(np.flatnonzero(folds != i))
        model = train(inner, trainset, fold_seeds[i])
        pred, scores = model.predict(ds.features[test])
        return test, pred, scores

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            results = list(pool.map(run, range(k)))
    else:
        results = [run(i) for i in range(k)]

    y_pred = np.empty(len(ds), dtype=np.int64)
    scores = np.empty((len(ds), N_CLASSES))
    per_fold = []
    for test, pred, sc in results:
        y_pred[test] = pred
        scores[test] = sc
        per_fold.append(_report(ds.labels[test], pred, sc))
    pooled = _report(ds.labels, y_pred, scores)
    return EvalReport(**pooled.__dict__, algorithm=params.algorithm.value,
                      per_fold=tuple(per_fold), labels=ds.labels.copy(), scores=scores)
