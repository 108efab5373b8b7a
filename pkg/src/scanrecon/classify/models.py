"""Decision tree, random forest, k-nearest-neighbor and Gaussian naive Bayes.

All models predict a 5-column score matrix (one column per severity code)
whose rows sum to 1; the predicted class is the argmax, ties going to the
lowest code.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import logsumexp

from .dataset import N_CLASSES, Dataset


class ModelError(ValueError):
    pass


class Algorithm(str, enum.Enum):
    DECISION_TREE = "DecisionTree"
    RANDOM_FOREST = "RandomForest"
    K_NEAREST = "KNearest"
    GAUSSIAN_NB = "GaussianNB"


@dataclass(frozen=True)
class TrainerParams:
    algorithm: Algorithm = Algorithm.DECISION_TREE
    # tree
    max_depth: Optional[int] = None
    max_features: Optional[int] = 200
    # forest
    n_estimators: int = 200
    forest_max_depth: int = 32
    forest_max_features: Union[int, str] = "sqrt"
    # knn
    k: int = 5
    minkowski_p: int = 2
    weighting: str = "uniform"
    # gnb
    variance_smoothing: float = 1e-9
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if self.weighting != "uniform":
            raise ModelError("only uniform neighbor weighting is supported")
        if self.k < 1 or self.n_estimators < 1 or self.minkowski_p < 1:
            raise ModelError("k, n_estimators and minkowski_p must be >= 1")


def _check_fit(X, y, need_two_classes=True):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ModelError("need a nonempty N x d matrix and N labels")
    if y.min() < 0 or y.max() >= N_CLASSES:
        raise ModelError(f"labels must lie in 0..{N_CLASSES - 1}")
    if need_two_classes and len(np.unique(y)) < 2:
        raise ModelError("training data holds a single class")
    return X, y


class Model:
    n_features: int

    def predict_scores(self, X) -> np.ndarray:
        raise NotImplementedError

    def _check_predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ModelError(f"expected {self.n_features} feature columns, got {X.shape[-1]}")
        return X

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        scores = self.predict_scores(X)
        return np.argmax(scores, axis=1), scores


# -- decision tree ------------------------------------------------------------

class DecisionTree(Model):
    """CART classifier with Gini impurity.

    Feature values are binned once against the training column's distinct
    values, so each node scans its candidate features with one bincount.
    At each node the features are visited in a random order and the search
    stops after ``max_features`` non-constant ones (more are drawn if the
    first ones are all constant in the node).
    """

    def __init__(self, max_depth=None, max_features=None, rng=None):
        self.max_depth = max_depth
        self.max_features = max_features
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def fit(self, X, y, sample_idx=None):
        X, y = _check_fit(X, y)
        n, d = X.shape
        self.n_features = d
        mf = d if self.max_features is None else max(1, min(int(self.max_features), d))
        levels, bins = [], np.empty((n, d), dtype=np.int64)
        for j in range(d):
            vals, inv = np.unique(X[:, j], return_inverse=True)
            levels.append(vals)
            bins[:, j] = inv
        idx = np.arange(n) if sample_idx is None else np.asarray(sample_idx, dtype=np.int64)
        C = N_CLASSES

        feature, threshold, left, right, value = [], [], [], [], []

        def new_node(rows):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(np.bincount(y[rows], minlength=C).astype(np.float64))
            return len(feature) - 1

        root = new_node(idx)
        stack = [(root, idx, 0)]
        while stack:
            node, rows, depth = stack.pop()
            counts = value[node]
            m = len(rows)
            if m < 2 or np.count_nonzero(counts) < 2:
                continue
            if self.max_depth is not None and depth >= self.max_depth:
                continue
            best = None  # (impurity, feature, cut bin)
            visited = 0
            for j in self.rng.permutation(d):
                if visited >= mf:
                    break
                nb = len(levels[j])
                b = bins[rows, j]
                hist = np.bincount(b * C + y[rows], minlength=nb * C).reshape(nb, C)
                present = np.flatnonzero(hist.sum(axis=1))
                if len(present) < 2:
                    continue
                visited += 1
                cum = np.cumsum(hist[present], axis=0)[:-1]
                n_left = cum.sum(axis=1)
                n_right = m - n_left
                right_counts = counts - cum
                gini_l = 1.0 - np.sum(cum * cum, axis=1) / (n_left * n_left)
                gini_r = 1.0 - np.sum(right_counts * right_counts, axis=1) / (n_right * n_right)
                weighted = (n_left * gini_l + n_right * gini_r) / m
                k = int(np.argmin(weighted))
                if best is None or weighted[k] < best[0]:
                    best = (weighted[k], j, present[k], present[k + 1])
            if best is None:
                continue
            _, j, lo, hi = best
            cut = (levels[j][lo] + levels[j][hi]) / 2.0
            go_left = bins[rows, j] <= lo
            lrows, rrows = rows[go_left], rows[~go_left]
            feature[node] = int(j)
            threshold[node] = float(cut)
            lnode, rnode = new_node(lrows), new_node(rrows)
            left[node], right[node] = lnode, rnode
            stack.append((rnode, rrows, depth + 1))
            stack.append((lnode, lrows, depth + 1))

        self.feature_ = np.array(feature, dtype=np.int64)
        self.threshold_ = np.array(threshold)
        self.left_ = np.array(left, dtype=np.int64)
        self.right_ = np.array(right, dtype=np.int64)
        vals = np.array(value)
        self.leaf_scores_ = vals / vals.sum(axis=1, keepdims=True)
        return self

    @property
    def node_count(self) -> int:
        return len(self.feature_)

    def apply(self, X) -> np.ndarray:
        X = self._check_predict(X)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature_[node] >= 0)
        while active.size:
            nd = node[active]
            goes_left = X[active, self.feature_[nd]] <= self.threshold_[nd]
            node[active] = np.where(goes_left, self.left_[nd], self.right_[nd])
            active = active[self.feature_[node[active]] >= 0]
        return node

    def predict_scores(self, X) -> np.ndarray:
        return self.leaf_scores_[self.apply(X)]


# -- random forest ------------------------------------------------------------

class RandomForest(Model):
    """Bagged decision trees; scores are the share of trees voting for each class."""

    def __init__(self, n_estimators=200, max_depth=32, max_features="sqrt", seed=0, n_jobs=1):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.max_features = max_features
        self.seed = seed
        self.n_jobs = n_jobs

    def _features_per_split(self, d: int) -> int:
        mf = self.max_features
        if mf == "sqrt":
            return max(1, int(math.sqrt(d)))
        if mf is None:
            return d
        return max(1, min(int(mf), d))

    def fit(self, X, y):
        X, y = _check_fit(X, y)
        n, d = X.shape
        self.n_features = d
        mf = self._features_per_split(d)
        children = np.random.SeedSequence(self.seed).spawn(self.n_estimators)

        def grow(child):
            rng = np.random.default_rng(child)
            sample = rng.integers(0, n, n)
            tree = DecisionTree(self.max_depth, mf, rng)
            # a bootstrap sample can come out single-class; such a tree is one leaf
            if len(np.unique(y[sample])) < 2:
                return _ConstantTree(int(y[sample[0]]), d)
            return tree.fit(X, y, sample_idx=sample)

        if self.n_jobs and self.n_jobs > 1:
            with ThreadPoolExecutor(self.n_jobs) as pool:
                self.trees_ = list(pool.map(grow, children))
        else:
            self.trees_ = [grow(c) for c in children]
        return self

    def predict_scores(self, X) -> np.ndarray:
        X = self._check_predict(X)
        votes = np.zeros((len(X), N_CLASSES))
        rows = np.arange(len(X))
        for tree in self.trees_:
            votes[rows, np.argmax(tree.predict_scores(X), axis=1)] += 1
        return votes / len(self.trees_)


class _ConstantTree(Model):
    def __init__(self, code: int, d: int):
        self.code = code
        self.n_features = d

    def predict_scores(self, X) -> np.ndarray:
        out = np.zeros((len(X), N_CLASSES))
        out[:, self.code] = 1.0
        return out


# -- k nearest neighbors ------------------------------------------------------

class KNearest(Model):
    """Brute-force Minkowski kNN; scores are neighbor class shares.

    Equal distances are broken by training-row order.
    """

    def __init__(self, k=5, p=2, chunk=256):
        self.k = k
        self.p = p
        self.chunk = chunk

    def fit(self, X, y):
        X, y = _check_fit(X, y, need_two_classes=False)
        if self.k > len(X):
            raise ModelError(f"k={self.k} exceeds the {len(X)} training rows")
        self.X_, self.y_ = X, y
        self.n_features = X.shape[1]
        return self

    def neighbors(self, X) -> np.ndarray:
        X = self._check_predict(X)
        out = np.empty((len(X), self.k), dtype=np.int64)
        for start in range(0, len(X), self.chunk):
            block = X[start:start + self.chunk]
            diff = np.abs(block[:, None, :] - self.X_[None, :, :])
            dist = np.sum(diff ** self.p, axis=2)
            out[start:start + len(block)] = np.argsort(dist, axis=1, kind="stable")[:, : self.k]
        return out

    def predict_scores(self, X) -> np.ndarray:
        nb = self.neighbors(X)
        labels = self.y_[nb]
        scores = np.zeros((len(nb), N_CLASSES))
        for c in range(N_CLASSES):
            scores[:, c] = np.mean(labels == c, axis=1)
        return scores


# -- Gaussian naive Bayes -----------------------------------------------------

class GaussianNB(Model):
    """Per-class independent Gaussians with empirical priors.

    ``variance_smoothing`` times the largest feature variance is added to
    every class variance so constant columns stay usable.
    """

    def __init__(self, variance_smoothing=1e-9):
        self.variance_smoothing = variance_smoothing

    def fit(self, X, y):
        X, y = _check_fit(X, y)
        self.n_features = X.shape[1]
        self.classes_ = np.unique(y)
        eps = self.variance_smoothing * np.var(X, axis=0).max()
        self.theta_ = np.array([X[y == c].mean(axis=0) for c in self.classes_])
        self.var_ = np.array([X[y == c].var(axis=0) for c in self.classes_]) + eps
        self.log_prior_ = np.log(np.array([np.mean(y == c) for c in self.classes_]))
        return self

    def joint_log_likelihood(self, X) -> np.ndarray:
        X = self._check_predict(X)
        out = np.empty((len(X), len(self.classes_)))
        for i in range(len(self.classes_)):
            norm = -0.5 * np.sum(np.log(2.0 * np.pi * self.var_[i]))
            quad = -0.5 * np.sum((X - self.theta_[i]) ** 2 / self.var_[i], axis=1)
            out[:, i] = self.log_prior_[i] + norm + quad
        return out

    def predict_scores(self, X) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        post = np.exp(jll - logsumexp(jll, axis=1, keepdims=True))
        scores = np.zeros((len(post), N_CLASSES))
        scores[:, self.classes_] = post
        return scores


# -- entry points -------------------------------------------------------------

def train(params: TrainerParams, ds: Union[Dataset, tuple], seed: int = 0) -> Model:
    """Fit the model selected by ``params`` on a dataset (or an ``(X, y)`` pair)."""
    X, y = (ds.features, ds.labels) if isinstance(ds, Dataset) else ds
    algo = params.algorithm
    if algo is Algorithm.DECISION_TREE:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        return DecisionTree(params.max_depth, params.max_features, rng).fit(X, y)
    if algo is Algorithm.RANDOM_FOREST:
        return RandomForest(params.n_estimators, params.forest_max_depth,
                            params.forest_max_features, seed, params.n_jobs).fit(X, y)
    if algo is Algorithm.K_NEAREST:
        return KNearest(params.k, params.minkowski_p).fit(X, y)
    if algo is Algorithm.GAUSSIAN_NB:
        return GaussianNB(params.variance_smoothing).fit(X, y)
    raise ModelError(f"unknown algorithm {algo!r}")


def predict(model: Model, row) -> tuple[int, np.ndarray]:
    """Class code and 5-score vector for a single feature row."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise ModelError("predict takes one feature row")
    codes, scores = model.predict(row[None, :])
    return int(codes[0]), scores[0]
