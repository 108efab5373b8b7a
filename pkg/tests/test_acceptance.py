"""End-to-end acceptance checks; each prints one PASS/FAIL line."""
import csv
import hashlib
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from scanrecon.classify import Algorithm, TrainerParams, assemble_dataset, cross_validate
from scanrecon.classify.metrics import confusion_matrix, macro_metrics, roc_auc_ovr
from scanrecon.cli import main
from scanrecon.cvss import base_score, parse_vector
from scanrecon.detect import LevelId, level_breakdown
from scanrecon.fixtures import sample_snapshot
from scanrecon.resolve import resolve_all
from scanrecon.synth import CorpusConfig, evaluate_pipeline, generate_corpus, synthetic_advisories

DATA = Path(__file__).parent / "data"


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})")
        assert ok, detail
    return emit


def test_1_cvss_reference(report):
    with open(DATA / "cvss_reference.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    start = time.perf_counter()
    mismatches = 0
    for row in rows:
        scored = base_score(parse_vector(row["vector"]))
        if f"{scored.base_score:.1f}" != f"{float(row['base_score']):.1f}" or scored.severity.name != row["severity"].upper():
            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = len(rows) == 2592 and mismatches == 0 and elapsed < 5.0
    report(1, "CVSS v3.1 reference table", ok, f"{len(rows)} vectors, {mismatches} mismatches, {elapsed:.2f}s")


def test_2_example_rows(report):
    snap = sample_snapshot()
    b = level_breakdown(snap)
    out = resolve_all(snap)
    per_level = {lv.value: b.counts[lv] for lv in (LevelId.L2, LevelId.L3, LevelId.L4, LevelId.L5, LevelId.L6)}
    picks = {c: out.resolved[c].severity.label if c in out.resolved else None
             for c in ("CVE-2020-35527", "CVE-2022-1292")}
    ok = all(n >= 1 for n in per_level.values()) and set(picks.values()) == {"Medium"}
    report(2, "example rows: findings at L2-L6, L5 picks most recent", ok, f"{per_level}, {picks}")


LEVEL_TARGETS = {LevelId.L2: 49.10, LevelId.L3: 13.00, LevelId.L4: 95.00, LevelId.L5: 57.50, LevelId.L6: 18.00}


def test_3_level_breakdown(report):
    start = time.perf_counter()
    corpus = generate_corpus(CorpusConfig())
    b = level_breakdown(corpus.snapshot)
    elapsed = time.perf_counter() - start
    got = {lv: round(b.percents[lv], 2) for lv in LEVEL_TARGETS}
    within = all(abs(got[lv] - want) <= 0.5 for lv, want in LEVEL_TARGETS.items())
    avg = float(b.per_image_average)
    ok = within and b.l1_total == 1669 and abs(avg - 1669 / 168) <= 0.01 and elapsed < 60
    detail = ", ".join(f"{lv.value} {p:.2f}" for lv, p in got.items())
    report(3, "synthetic level breakdown", ok, f"{detail}, avg {avg:.2f}, {elapsed:.1f}s")


def test_4_resolution(report, default_corpus):
    first = resolve_all(default_corpus.snapshot)
    second = resolve_all(first.store)
    frac = 100 * first.resolved_fraction
    after = float(first.per_image_average_after)
    ok = abs(frac - 70.1) <= 2.0 and abs(after - 2.89) <= 0.05 and len(second.resolved) == 0
    report(4, "synthetic bottom-up resolution", ok,
           f"resolved {frac:.2f}%, avg after {after:.2f}, second run {len(second.resolved)}")


def test_5_false_positives(report, default_corpus):
    snap = default_corpus.snapshot
    s = evaluate_pipeline(default_corpus, level_breakdown(snap), resolve_all(snap))
    ok = s.hard_fp_recall == 1.0 and s.hard_fp_precision == 1.0 and s.soft_fp_recall == 1.0
    report(5, "false-positive ledger", ok,
           f"hard recall {s.hard_fp_recall}, hard precision {s.hard_fp_precision}, soft recall {s.soft_fp_recall}")


def test_6_metrics(report):
    y_true = [0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4]
    y_pred = [0, 0, 1, 1, 1, 2, 1, 2, 2, 2, 3, 2, 1, 3, 3, 2, 3, 4, 3, 4]
    m = macro_metrics(y_true, y_pred)
    want = (7 / 10, 58 / 75, 7 / 10, 18 / 25)
    got = (m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1)
    hand = all(abs(a - b) <= 1e-9 for a, b in zip(got, want))
    c = confusion_matrix(y_true, y_pred)
    trace = np.trace(c) / len(y_true) == m.accuracy
    y = np.array([0, 1, 2, 3, 4] * 4)
    onehot = np.eye(5)[y]
    separable = roc_auc_ovr(y, onehot) == [1.0] * 5
    rng = np.random.default_rng(0)
    noise = roc_auc_ovr(rng.integers(0, 5, 10_000), rng.dirichlet(np.ones(5), 10_000))
    null = all(abs(a - 0.5) <= 0.05 for a in noise)
    ok = hand and trace and separable and null
    report(6, "metrics oracle", ok,
           f"hand {hand}, trace {trace}, separable {separable}, random AUC {min(noise):.3f}..{max(noise):.3f}")


def test_7_classifier(report):
    start = time.perf_counter()
    ds = assemble_dataset(synthetic_advisories(5000, seed=0))
    dt = cross_validate(TrainerParams(Algorithm.DECISION_TREE), ds, seed=0)
    nb = cross_validate(TrainerParams(Algorithm.GAUSSIAN_NB), ds, seed=0)
    elapsed = time.perf_counter() - start
    ok = dt.macro_f1 >= 0.95 and nb.macro_f1 < dt.macro_f1 and elapsed < 120
    report(7, "classifier property suite", ok,
           f"tree macro-F1 {dt.macro_f1:.4f}, naive Bayes {nb.macro_f1:.4f}, {elapsed:.1f}s")


def _digest(paths):
    h = hashlib.sha256()
    for p in sorted(paths):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def _pipeline(root: Path, jobs: int) -> str:
    """Run synth, detect, resolve and classify through the CLI; hash every output."""
    data = root / "data"
    outs = root / "outs"
    outs.mkdir(parents=True)
    g = ["--data-dir", str(data), "--seed", "5", "--jobs", str(jobs)]
    steps = [
        g + ["--out", str(outs / "synth.json"), "synth", "--images", "24", "--cves", "900", "--score"],
        g + ["--out", str(outs / "detect.json"), "detect"],
        g + ["--out", str(outs / "detect.csv"), "--output-format", "csv", "detect"],
        g + ["--out", str(outs / "resolve.json"), "resolve", "--write-store", str(root / "resolved")],
        g + ["--out", str(outs / "tree.json"), "classify", "--roc-out", str(outs / "roc_tree.csv")],
        g + ["--out", str(outs / "forest.csv"), "--output-format", "csv", "classify",
             "--algorithm", "RandomForest", "--param", "n_estimators=24", "--roc-out", str(outs / "roc_forest.csv")],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    files = list(outs.iterdir()) + list(data.iterdir()) + list((root / "resolved").iterdir())
    return _digest([f for f in files if f.is_file()])


def test_8_determinism(report, tmp_path):
    # reports name their output directories, so every run uses the same root
    root = tmp_path / "run"
    digests = []
    for jobs in (1, 1, 4):
        if root.exists():
            shutil.rmtree(root)
        digests.append(_pipeline(root, jobs))
    a, b, c = digests
    ok = a == b == c
    report(8, "determinism across runs and thread counts", ok,
           f"run1 {a[:12]}, run2 {b[:12]}, jobs=4 {c[:12]}")
