"""Feature/label table built from advisory CVSS vectors."""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..cvss import CvssVector, base_score
from ..model import AdvisoryRecord

CATEGORICAL = (
    "attack_vector", "attack_complexity", "privileges_required", "user_interaction",
    "scope", "confidentiality_impact", "integrity_impact", "availability_impact",
)
NUMERIC = ("exploitability_score", "impact_score")
FEATURES = CATEGORICAL + NUMERIC
N_CLASSES = 5


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # N x 10, float64
    labels: np.ndarray  # N, int64 codes 0..4
    encoders: dict  # column -> tuple of tokens; code = position
    ids: tuple = ()

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[1] != len(FEATURES):
            raise DatasetError(f"features must be N x {len(FEATURES)}")
        if len(self.labels) != len(self.features):
            raise DatasetError("features and labels differ in length")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        ids = tuple(self.ids[i] for i in idx) if self.ids else ()
        return Dataset(self.features[idx], self.labels[idx], self.encoders, ids)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=N_CLASSES)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(FEATURES + ("label",))
        n_cat = len(CATEGORICAL)
        for row, label in zip(self.features, self.labels):
            w.writerow([int(x) for x in row[:n_cat]] + [f"{x:.1f}" for x in row[n_cat:]] + [int(label)])
        return buf.getvalue()


def _tokens(v: CvssVector) -> list[str]:
    return [getattr(v, name).name for name in CATEGORICAL]


def build_encoders(vectors: Iterable[CvssVector]) -> dict:
    """Lexicographic code tables over the tokens actually observed."""
    seen = {name: set() for name in CATEGORICAL}
    for v in vectors:
        for name, tok in zip(CATEGORICAL, _tokens(v)):
            seen[name].add(tok)
    return {name: tuple(sorted(toks)) for name, toks in seen.items()}


def encode_vectors(vectors: Sequence[CvssVector], encoders: dict) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and labels for ``vectors`` under existing ``encoders``."""
    lookup = {name: {tok: i for i, tok in enumerate(encoders[name])} for name in CATEGORICAL}
    X = np.empty((len(vectors), len(FEATURES)), dtype=np.float64)
    y = np.empty(len(vectors), dtype=np.int64)
    for i, v in enumerate(vectors):
        for j, (name, tok) in enumerate(zip(CATEGORICAL, _tokens(v))):
            try:
                X[i, j] = lookup[name][tok]
            except KeyError:
                raise DatasetError(f"token {tok!r} unseen for {name}") from None
        scored = base_score(v)
        X[i, -2] = scored.exploitability_score
        X[i, -1] = scored.impact_score
        y[i] = int(scored.severity)
    return X, y


def assemble_dataset(advisories: Iterable[AdvisoryRecord]) -> Dataset:
    """One row per advisory carrying a CVSS vector; labels come from the base score."""
    vectors, ids, skipped = [], [], 0
    for adv in advisories:
        if adv.cvss is None:
            skipped += 1
            continue
        vectors.append(adv.cvss)
        ids.append(adv.cve_identifier)
    if skipped:
        warnings.warn(f"{skipped} advisories without a CVSS vector were skipped", stacklevel=2)
    if not vectors:
        raise DatasetError("no advisory carries a CVSS vector")
    encoders = build_encoders(vectors)
    X, y = encode_vectors(vectors, encoders)
    return Dataset(X, y, encoders, tuple(ids))
