import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.naive_bayes import GaussianNB as SkGNB
from sklearn.neighbors import KNeighborsClassifier
from sklearn.tree import DecisionTreeClassifier

from scanrecon.classify import (
    FEATURES,
    Algorithm,
    Dataset,
    DatasetError,
    ModelError,
    TrainerParams,
    assemble_dataset,
    cross_validate,
    predict,
    stratified_folds,
    train,
)
from scanrecon.classify.models import DecisionTree, GaussianNB, KNearest, RandomForest
from scanrecon.cvss import all_vectors, base_score, parse_vector
from scanrecon.model import AdvisoryRecord, Assigner, Severity
from scanrecon.synth import synthetic_advisories


def adv(vector, cve="CVE-2020-0001"):
    v = parse_vector(vector) if vector else None
    sev = base_score(v).severity if v else Severity.LOW
    return AdvisoryRecord(cve, Assigner.NVD, sev, "", None, v)


def blobs(n=300, d=4, seed=0, classes=3):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, classes, n)
    X = rng.normal(size=(n, d)) + y[:, None] * 1.5
    return X, y


# -- dataset -----------------------------------------------------------------

def test_labels_and_codes():
    ds = assemble_dataset([
        adv("CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H", "CVE-2020-0001"),
        adv("CVSS:3.1/AV:L/AC:L/PR:N/UI:N/S:U/C:N/I:N/A:N", "CVE-2020-0002"),
        adv("CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:L/I:N/A:N", "CVE-2020-0003"),
    ])
    assert ds.labels.tolist()[:2] == [4, 0]
    assert ds.encoders["attack_vector"] == ("LOCAL", "NETWORK")
    assert ds.features[:, 0].tolist() == [1, 0, 1]
    assert ds.features[0, -2:].tolist() == [3.9, 5.9]
    assert ds.ids == ("CVE-2020-0001", "CVE-2020-0002", "CVE-2020-0003")
    assert ds.to_csv().split("\r\n")[0] == ",".join(FEATURES) + ",label"


def test_skips_vectorless_advisories():
    with pytest.warns(UserWarning):
        ds = assemble_dataset([adv("CVSS:3.1/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H"), adv(None)])
    assert len(ds) == 1
    with pytest.raises(DatasetError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assemble_dataset([adv(None)])


def test_label_pipeline_over_whole_grid():
    vectors = list(all_vectors())
    ds = assemble_dataset([AdvisoryRecord("CVE-2020-0001", Assigner.NVD, base_score(v).severity, "", None, v)
                           for v in vectors])
    assert len(ds) == 2592
    for v, label, row in zip(vectors, ds.labels, ds.features):
        s = base_score(v)
        assert label == int(s.severity)
        assert (row[-2], row[-1]) == (s.exploitability_score, s.impact_score)
    # labels are a function of the features, so an unlimited tree memorises them
    model = train(TrainerParams(max_features=None), ds)
    assert np.array_equal(model.predict(ds.features)[0], ds.labels)


# -- decision tree -----------------------------------------------------------

def test_tree_two_points():
    model = train(TrainerParams(), (np.array([[0.0], [1.0]]), np.array([0, 1])))
    assert model.predict(np.array([[0.0], [1.0]]))[0].tolist() == [0, 1]


def test_tree_matches_sklearn():
    # shallow trees have no tied splits, so the structure must agree exactly
    X, y = blobs(400, 5, seed=1, classes=4)
    probe = np.random.default_rng(9).normal(size=(500, 5)) * 2 + 2
    ours = DecisionTree(3, None, np.random.default_rng(0)).fit(X, y)
    sk = DecisionTreeClassifier(max_depth=3, random_state=0).fit(X, y)
    assert ours.node_count == sk.tree_.node_count
    assert np.array_equal(ours.predict(probe)[0], sk.predict(probe))
    assert np.allclose(ours.predict_scores(probe)[:, :4], sk.predict_proba(probe))
    # unlimited depth: both memorise the training set with the same node count
    ours = DecisionTree(None, None, np.random.default_rng(0)).fit(X, y)
    sk = DecisionTreeClassifier(random_state=0).fit(X, y)
    assert ours.node_count == sk.tree_.node_count
    assert np.array_equal(ours.predict(X)[0], y)


def _gini(labels):
    if len(labels) == 0:
        return 0.0
    p = np.bincount(labels, minlength=5) / len(labels)
    return 1.0 - float(np.sum(p * p))


def _best_split_brute(X, y):
    best = np.inf
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        for lo, hi in zip(vals[:-1], vals[1:]):
            left = X[:, j] <= (lo + hi) / 2
            w = (left.sum() * _gini(y[left]) + (~left).sum() * _gini(y[~left])) / len(y)
            best = min(best, w)
    return best


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_every_split_is_optimal(seed):
    X, y = blobs(60, 3, seed=seed, classes=3)
    X = np.round(X, 1)  # force repeated values
    tree = DecisionTree(None, None, np.random.default_rng(seed)).fit(X, y)
    stack = [(0, np.arange(len(X)))]
    while stack:
        node, rows = stack.pop()
        j = tree.feature_[node]
        if j < 0:
            continue
        go = X[rows, j] <= tree.threshold_[node]
        got = (go.sum() * _gini(y[rows][go]) + (~go).sum() * _gini(y[rows][~go])) / len(rows)
        assert got == pytest.approx(_best_split_brute(X[rows], y[rows]), abs=1e-12)
        stack += [(tree.left_[node], rows[go]), (tree.right_[node], rows[~go])]


def test_tree_depth_limit():
    X, y = blobs(200, 3, seed=2)
    t = DecisionTree(1, None).fit(X, y)
    assert t.node_count == 3


# -- forest ------------------------------------------------------------------

def test_forest_deterministic_and_thread_free():
    X, y = blobs(300, 6, seed=3)
    probe = X[:50] + 0.1
    a = RandomForest(40, 8, "sqrt", seed=5).fit(X, y).predict_scores(probe)
    b = RandomForest(40, 8, "sqrt", seed=5).fit(X, y).predict_scores(probe)
    c = RandomForest(40, 8, "sqrt", seed=5, n_jobs=4).fit(X, y).predict_scores(probe)
    assert np.array_equal(a, b) and np.array_equal(a, c)
    assert np.allclose(a.sum(axis=1), 1.0)


def test_forest_unanimous():
    X = np.array([[0.0], [0.1], [5.0], [5.1]] * 5)
    y = np.array([0, 0, 1, 1] * 5)
    f = RandomForest(15, 4, None, seed=0).fit(X, y)
    code, scores = predict(f, [0.05])
    assert code == 0 and scores[0] == 1.0


# -- kNN ---------------------------------------------------------------------

def test_knn_matches_sklearn():
    X, y = blobs(300, 4, seed=4)
    probe = np.random.default_rng(1).normal(size=(200, 4)) * 2 + 1.5
    for p in (1, 2):
        ours = KNearest(5, p).fit(X, y)
        sk = KNeighborsClassifier(5, p=p, algorithm="brute").fit(X, y)
        assert np.array_equal(ours.neighbors(probe), sk.kneighbors(probe, return_distance=False))
        assert np.allclose(ours.predict_scores(probe)[:, :3], sk.predict_proba(probe))


def test_knn_self_match():
    X, y = blobs(40, 3, seed=5)
    code, scores = predict(KNearest(1).fit(X, y), X[7])
    assert code == y[7] and scores[y[7]] == 1.0


def test_knn_too_few_rows():
    with pytest.raises(ModelError):
        train(TrainerParams(algorithm="KNearest", k=10), (np.zeros((4, 2)), np.array([0, 1, 0, 1])))


# -- naive Bayes -------------------------------------------------------------

def test_gnb_matches_sklearn():
    X, y = blobs(300, 4, seed=6, classes=5)
    probe = np.random.default_rng(2).normal(size=(100, 4)) * 3 + 3
    ours = GaussianNB().fit(X, y)
    sk = SkGNB().fit(X, y)
    assert np.allclose(ours.predict_scores(probe), sk.predict_proba(probe), atol=1e-9)


def test_gnb_midpoint_tie():
    X = np.array([[-1.0], [-3.0], [1.0], [3.0]])
    code, scores = predict(GaussianNB().fit(X, np.array([0, 0, 1, 1])), [0.0])
    assert scores[:2] == pytest.approx([0.5, 0.5]) and code == 0


# -- shared behaviour --------------------------------------------------------

@pytest.mark.parametrize("algorithm", ["DecisionTree", "GaussianNB", "RandomForest"])
def test_single_class_rejected(algorithm):
    with pytest.raises(ModelError):
        train(TrainerParams(algorithm=algorithm), (np.zeros((5, 2)), np.zeros(5, dtype=int)))


@pytest.mark.parametrize("algorithm", list(Algorithm))
def test_dimension_mismatch(algorithm):
    X, y = blobs(60, 3)
    model = train(TrainerParams(algorithm=algorithm, n_estimators=5), (X, y))
    with pytest.raises(ModelError):
        model.predict(np.zeros((2, 4)))
    with pytest.raises(ModelError):
        predict(model, np.zeros(2))


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(list(Algorithm)), st.integers(0, 1000))
def test_argmax_invariance(algorithm, seed):
    X, y = blobs(80, 3, seed=seed)
    model = train(TrainerParams(algorithm=algorithm, n_estimators=7), (X, y), seed)
    probe = np.random.default_rng(seed).normal(size=(30, 3)) * 2
    codes, scores = model.predict(probe)
    assert np.array_equal(codes, np.argmax(scores, axis=1))
    assert np.allclose(scores.sum(axis=1), 1.0)


def test_bad_params():
    with pytest.raises(ModelError):
        TrainerParams(weighting="distance")
    with pytest.raises(ModelError):
        TrainerParams(k=0)
    with pytest.raises(ValueError):
        TrainerParams(algorithm="MLP")


# -- cross-validation --------------------------------------------------------

def test_folds_stratified_and_balanced():
    labels = np.repeat(np.arange(5), [3, 12, 40, 30, 15])
    with pytest.warns(UserWarning):
        folds = stratified_folds(labels, 5, seed=1)
    sizes = np.bincount(folds, minlength=5)
    assert sizes.max() - sizes.min() <= 1
    for c in range(5):
        per = np.bincount(folds[labels == c], minlength=5)
        assert per.max() - per.min() <= 1
    with pytest.warns(UserWarning):
        again = stratified_folds(labels, 5, seed=1)
    assert np.array_equal(folds, again)


def test_fold_errors():
    with pytest.raises(ValueError):
        stratified_folds([0, 1], 1)
    with pytest.raises(ValueError):
        stratified_folds([0, 1, 0], 5)


def synthetic_dataset(n, seed):
    return assemble_dataset(synthetic_advisories(n, seed=seed))


def test_cv_separable_tree():
    X = np.r_[np.zeros((10, 10)), np.ones((10, 10))]
    ds = Dataset(X, np.r_[np.zeros(10, int), np.ones(10, int)], {})
    rep = cross_validate(TrainerParams(), ds, k=5)
    assert rep.accuracy == 1.0


def test_cv_report_shape_and_determinism():
    ds = synthetic_dataset(600, 2)
    a = cross_validate(TrainerParams(), ds, seed=3)
    b = cross_validate(TrainerParams(), ds, seed=3, n_jobs=3)
    assert a.to_json() == b.to_json()
    assert a.metrics_csv() == b.metrics_csv() and a.roc_csv() == b.roc_csv()
    assert a.confusion.sum(axis=1).tolist() == ds.class_counts().tolist()
    assert a.accuracy == pytest.approx(np.trace(a.confusion) / len(ds))
    assert len(a.per_fold) == 5
    for value in (a.accuracy, a.macro_precision, a.macro_recall, a.macro_f1):
        assert 0.0 <= value <= 1.0
