import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scanrecon.cvss import base_score
from scanrecon.detect import LevelId, level_breakdown
from scanrecon.model import Severity
from scanrecon.resolve import resolve_all
from scanrecon.store import read_snapshot
from scanrecon.synth import (
    DEFAULT_CLASS_SHARES,
    KIND_LEVEL,
    CorpusConfig,
    Kind,
    SynthError,
    apportion,
    evaluate_pipeline,
    generate_corpus,
    sample_vector,
    synthetic_advisories,
)


def score(corpus):
    b = level_breakdown(corpus.snapshot)
    o = resolve_all(corpus.snapshot)
    return b, o, evaluate_pipeline(corpus, b, o)


# -- config ------------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    {"image_count": -1},
    {"hard_fp_count": -2},
    {"inconsistent_fraction": 1.5},
    {"class_shares": (0.5, 0.5, 0.1, 0.0, 0.0)},
    {"class_shares": (0.5, 0.5)},
    {"tool_names": ()},
])
def test_bad_config(kwargs):
    with pytest.raises(SynthError):
        CorpusConfig(**kwargs)


def test_config_json_round_trip():
    cfg = CorpusConfig(image_count=7, seed=3)
    assert CorpusConfig.from_json(json.dumps(cfg.to_mapping())) == cfg
    with pytest.raises(SynthError):
        CorpusConfig.from_json('{"colour": 1}')
    with pytest.raises(SynthError):
        CorpusConfig.from_json("[1]")


def test_default_targets():
    cfg = CorpusConfig()
    assert cfg.cve_total == 3766 and cfg.inconsistent_total == 1669
    t = cfg.level_targets()
    assert (t[LevelId.L2], t[LevelId.L3], t[LevelId.L4], t[LevelId.L5], t[LevelId.L6]) == (819, 217, 1586, 960, 300)


def test_infeasible_mix():
    with pytest.raises(SynthError):
        generate_corpus(CorpusConfig(image_count=0, distinct_cves=300))
    with pytest.raises(SynthError):
        generate_corpus(CorpusConfig(image_count=10, distinct_cves=None, cves_per_image=0,
                                     inconsistency_mix={"VersionMismatch": 1.0}, solvable_mix={},
                                     hard_fp_count=0, soft_fp_count=0))
    mix = {"StaleModificationTime": 0.5, "IntraToolDuplicate": 0.5}
    with pytest.raises(SynthError):
        generate_corpus(CorpusConfig(image_count=10, distinct_cves=300, inconsistency_mix=mix,
                                     solvable_mix=mix))


def test_apportion():
    assert apportion([0.5, 0.5], 3) == [2, 1]
    assert apportion([0.25] * 4, 10) == [3, 3, 2, 2]
    assert sum(apportion(DEFAULT_CLASS_SHARES, 3766)) == 3766


@settings(max_examples=100)
@given(st.lists(st.integers(1, 50), min_size=1, max_size=6), st.integers(0, 5000))
def test_apportion_properties(weights, total):
    shares = [w / sum(weights) for w in weights]
    out = apportion(shares, total)
    assert sum(out) == total
    assert all(abs(c - s * total) < 1 + 1e-6 for c, s in zip(out, shares))


# -- default corpus ----------------------------------------------------------

def test_default_ledger_totals(default_corpus):
    entries = default_corpus.cve_entries()
    assert len(entries) == 3766
    assert sum(e.inconsistent for e in entries) == 1669
    assert len({e.cve_identifier for e in entries}) == 3766
    assert all(e.cve_identifier.startswith("CVE-2099-") for e in entries)
    assert len(default_corpus.fp_ids("hard_fp")) == 40
    assert len(default_corpus.fp_ids("soft_fp")) == 40


def test_default_detection_matches_ledger(default_corpus):
    _, _, s = score(default_corpus)
    for kind in Kind:
        assert s.detection_recall[kind] == 1.0, kind
        assert s.detection_precision[kind] == 1.0, kind
    assert s.hard_fp_recall == s.hard_fp_precision == 1.0
    assert s.soft_fp_recall == s.soft_fp_precision == 1.0
    for lv, acc in s.resolution_accuracy.items():
        assert acc == 1.0, lv
    assert s.expected_level_agreement == 1.0
    for v in s.to_dict()["detection_recall"].values():
        assert 0.0 <= v <= 1.0


def test_ledger_covers_every_record(default_corpus):
    ids = [e.record_id for e in default_corpus.ledger if e.artifact != "cve"]
    assert len(ids) == len(set(ids))
    scan_ids = {r.record_id for r in default_corpus.scan_records}
    assert set(ids) <= scan_ids
    assert {r.cve_identifier for r in default_corpus.scan_records} == set(default_corpus.ground_truth())


def test_hard_fp_exact_count():
    c = generate_corpus(CorpusConfig(image_count=12, distinct_cves=200, hard_fp_count=10, soft_fp_count=0, seed=5))
    snap = c.snapshot
    absent = [r for r in snap.scan_results
              if r.package_name not in snap.inventories[r.image_name].names()]
    assert len(absent) == 10
    assert {r.record_id for r in absent} == c.fp_ids("hard_fp")


def test_determinism(tmp_path):
    cfg = CorpusConfig(image_count=12, distinct_cves=400, seed=4)
    a, b = generate_corpus(cfg), generate_corpus(cfg)
    a.write(tmp_path / "a")
    b.write(tmp_path / "b")
    for name in ("scan_results.csv", "assigner_results.csv", "image_packages.csv", "ledger.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert a.snapshot.fingerprint() == b.snapshot.fingerprint()
    other = generate_corpus(CorpusConfig(image_count=12, distinct_cves=400, seed=5))
    assert other.snapshot.fingerprint() != a.snapshot.fingerprint()


def test_written_corpus_reads_back(small_corpus, tmp_path):
    small_corpus.write(tmp_path)
    assert read_snapshot(tmp_path).fingerprint() == small_corpus.snapshot.fingerprint()


def test_zero_injection_corpus():
    c = generate_corpus(CorpusConfig(image_count=10, distinct_cves=300, inconsistent_fraction=0,
                                     hard_fp_count=0, soft_fp_count=0))
    b, o, s = score(c)
    assert all(v is None for v in s.detection_recall.values())
    assert all(n == 0 for n in b.counts.values())
    assert s.resolved_fraction == 0.0
    assert s.hard_fp_recall is None and s.soft_fp_recall is None


@pytest.mark.parametrize("kind", list(Kind))
def test_solvable_only_corpus(kind):
    mix = {kind.value: 1.0}
    c = generate_corpus(CorpusConfig(image_count=10, distinct_cves=300, inconsistency_mix=mix,
                                     solvable_mix=mix, hard_fp_count=3, soft_fp_count=3, seed=3))
    b, o, s = score(c)
    assert o.residual_inconsistent == frozenset()
    assert s.resolution_accuracy[KIND_LEVEL[kind]] == 1.0
    assert s.detection_recall[kind] == 1.0
    for other in Kind:
        if other is not kind:
            assert b.counts[KIND_LEVEL[other]] == 0


def test_scale_invariance():
    rates = []
    for images in (84, 168):
        cfg = CorpusConfig(image_count=images, distinct_cves=images * 22, seed=2)
        b = level_breakdown(generate_corpus(cfg).snapshot)
        rates.append({lv: b.percents[lv] for lv in LevelId})
    for lv in LevelId:
        assert abs(rates[0][lv] - rates[1][lv]) < 1.0, lv


def test_breakdown_fingerprint_checked(small_corpus, default_corpus):
    b = level_breakdown(default_corpus.snapshot)
    o = resolve_all(small_corpus.snapshot)
    with pytest.raises(SynthError):
        evaluate_pipeline(small_corpus, b, o)


# -- advisory sampling -------------------------------------------------------

@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.sampled_from(list(Severity)))
def test_sample_vector_hits_band(seed, band):
    v = sample_vector(np.random.default_rng(seed), band)
    assert base_score(v).severity is band


def test_synthetic_advisories_hit_shares():
    advs = synthetic_advisories(2000, seed=1)
    counts = [0] * 5
    for a in advs:
        assert base_score(a.cvss).severity is a.severity
        counts[int(a.severity)] += 1
    assert counts == apportion(DEFAULT_CLASS_SHARES, 2000)
    assert synthetic_advisories(50, seed=1) == synthetic_advisories(50, seed=1)
