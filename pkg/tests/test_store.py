import itertools
import random
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scanrecon.model import UNAPPROVED, AdvisoryRecord, PackageEntry, PackageInventory, Severity, VulnRecord
from scanrecon.store import (
    ASSIGNER_RESULTS,
    COLUMNS,
    IMAGE_PACKAGES,
    SCAN_RESULTS,
    CsvHeaderError,
    MatchKey,
    SealedError,
    StoreError,
    VulnStore,
    export_csv,
    load_snapshot,
    read_snapshot,
    write_snapshot,
)
from scanrecon.synth import DEFAULT_CLASS_SHARES, apportion

S = Severity
T0 = datetime(2022, 1, 1, tzinfo=timezone.utc)


def rec(cve="CVE-2021-4193", sev=S.LOW, image="img", tool="trivy", pkg="vim", ver="1", assigner="NVD", mtime=T0):
    return VulnRecord(image, tool, cve, pkg, ver, sev, "Debian", assigner, mtime)


def test_add_and_dedup():
    store = VulnStore()
    assert store.add_records(SCAN_RESULTS, [rec(sev=S.LOW), rec(sev=S.HIGH), rec(pkg="x")]) == 3
    assert store.add_records(SCAN_RESULTS, [rec(sev=S.LOW)]) == 0


def test_kind_mismatch():
    adv = AdvisoryRecord("CVE-2021-4193", "NVD", S.LOW, "LOW")
    with pytest.raises(TypeError):
        VulnStore().add_records(SCAN_RESULTS, [adv])


def test_sealed_store_rejects_inserts():
    store = VulnStore()
    store.seal()
    with pytest.raises(SealedError):
        store.add_records(SCAN_RESULTS, [rec()])
    with pytest.raises(SealedError):
        store.import_csv(SCAN_RESULTS, ",".join(COLUMNS[SCAN_RESULTS]) + "\r\n")


def test_mismatch_pair_by_assigner():
    a = rec(sev=S.MEDIUM, assigner="Redhat")
    b = rec(sev=S.LOW, assigner="Ubuntu", tool="snyk")
    snap = VulnStore.from_records([a, b])
    assert snap.severity_mismatch_pairs("cve_identifier") == [(0, 1)]


def test_mismatch_pairs_lmm():
    recs = [rec(sev=S.LOW, pkg="a"), rec(sev=S.MEDIUM, pkg="b"), rec(sev=S.MEDIUM, pkg="c")]
    snap = VulnStore.from_records(recs)
    pairs = snap.severity_mismatch_pairs(["cve_identifier"])
    assert len(pairs) == 2
    low = snap.ref_of(recs[0])
    assert all(low in p for p in pairs)


def test_mismatch_pairs_identical_ratings():
    snap = VulnStore.from_records([rec(pkg="a"), rec(pkg="b")])
    assert snap.severity_mismatch_pairs("cve_identifier") == []


def test_mismatch_pairs_skip_unapproved_and_include_advisories():
    recs = [rec(sev=S.LOW), rec(sev=UNAPPROVED, pkg="z")]
    adv = AdvisoryRecord("CVE-2021-4193", "NVD", S.HIGH, "HIGH", T0)
    snap = VulnStore.from_records(recs, [adv])
    pairs = snap.severity_mismatch_pairs(["cve_identifier", "assigner", "modification_time"])
    assert pairs == [(snap.ref_of(recs[0]), snap.ref_of(adv))]
    # advisories lack package fields, so a package key leaves them out
    assert snap.severity_mismatch_pairs(["cve_identifier", "package_name"]) == []


@pytest.mark.parametrize("fields", [[], ["cve_identifier", "cve_identifier"], ["severity"]])
def test_bad_match_keys(fields):
    with pytest.raises(ValueError):
        MatchKey(tuple(fields))


def brute_pairs(snap, fields):
    out = []
    refs = [r for r in snap.scan_refs if snap.record(r).severity is not UNAPPROVED]
    for x, y in itertools.combinations(refs, 2):
        a, b = snap.record(x), snap.record(y)
        if all(getattr(a, f) == getattr(b, f) for f in fields) and a.severity != b.severity:
            out.append((x, y))
    return sorted(out)


@st.composite
def small_records(draw):
    return rec(
        cve=draw(st.sampled_from(["CVE-2020-0001", "CVE-2020-0002"])),
        sev=draw(st.sampled_from(list(S) + [UNAPPROVED])),
        image=draw(st.sampled_from(["a", "b"])),
        tool=draw(st.sampled_from(["trivy", "snyk"])),
        pkg=draw(st.sampled_from(["p", "q"])),
        ver=draw(st.sampled_from(["1", "2"])),
        assigner=draw(st.sampled_from([None, "NVD", "Ubuntu"])),
        mtime=draw(st.sampled_from([None, T0])),
    )


@settings(max_examples=80)
@given(st.lists(small_records(), max_size=14),
       st.lists(st.sampled_from(["cve_identifier", "image_name", "package_name", "package_version",
                                 "assigner", "modification_time", "tool_name"]),
                min_size=1, max_size=4, unique=True))
def test_mismatch_pairs_match_brute_force(recs, fields):
    snap = VulnStore.from_records(recs)
    assert snap.severity_mismatch_pairs(fields, tables=[SCAN_RESULTS]) == brute_pairs(snap, fields)


def test_group_count_by_tool_and_severity():
    recs = [rec(pkg=f"m{i}", sev=S.MEDIUM) for i in range(6)] + [rec(pkg=f"h{i}", sev=S.HIGH) for i in range(4)]
    snap = VulnStore.from_records(recs)
    assert snap.group_count(["tool_name", "severity"]) == {("trivy", "High"): 4, ("trivy", "Medium"): 6}


def test_group_count_empty_and_unknown_field():
    snap = VulnStore().seal()
    assert snap.group_count(["severity"]) == {}
    with pytest.raises(StoreError):
        snap.group_count(["colour"])


def test_group_count_class_share_fixture():
    counts = apportion(DEFAULT_CLASS_SHARES, 10000)
    recs = []
    for code, n in enumerate(counts):
        recs += [rec(cve=f"CVE-2099-{code}{i:05d}", sev=S(code)) for i in range(n)]
    got = VulnStore.from_records(recs).group_count(["severity"])
    expected = {"Medium": 4740, "High": 3640, "None": 344, "Low": 753, "Critical": 521}
    assert sum(got.values()) == 10000
    for label, n in expected.items():
        assert abs(got[(label,)] - n) <= 1


def test_export_empty_table_is_header_only():
    snap = VulnStore().seal()
    for kind in COLUMNS:
        assert export_csv(snap, kind) == ",".join(COLUMNS[kind]) + "\r\n"


def test_csv_roundtrip_five_records(samples):
    recs = list(samples.scan_results[:5])
    snap = VulnStore.from_records(recs)
    again = load_snapshot({SCAN_RESULTS: export_csv(snap, SCAN_RESULTS)})
    assert list(again.scan_results) == list(snap.scan_results)


def test_fixture_roundtrip_all_tables(samples, tmp_path):
    write_snapshot(samples, tmp_path)
    again = read_snapshot(tmp_path)
    for kind in COLUMNS:
        assert export_csv(again, kind) == export_csv(samples, kind)
    assert again.fingerprint() == samples.fingerprint()


def test_header_mismatch_lists_columns():
    with pytest.raises(CsvHeaderError) as info:
        load_snapshot({SCAN_RESULTS: "image_name,bogus\r\n"})
    assert "bogus" in str(info.value) and "tool_name" in str(info.value)


def test_record_id_tamper_detected(samples):
    text = export_csv(samples, SCAN_RESULTS)
    lines = text.split("\r\n")
    fields = lines[1].split(",")
    fields[-1] = "0" * 16
    lines[1] = ",".join(fields)
    with pytest.raises(StoreError):
        load_snapshot({SCAN_RESULTS: "\r\n".join(lines)})


def test_empty_inventory_survives_roundtrip():
    inv = PackageInventory("scratch", "Unknown", ())
    snap = VulnStore.from_records(inventories=[inv])
    again = load_snapshot({IMAGE_PACKAGES: export_csv(snap, IMAGE_PACKAGES)})
    assert again.inventories["scratch"].entries == ()


def test_inventory_merge():
    a = PackageInventory("img", "Debian", (PackageEntry("a", "1"),))
    b = PackageInventory("img", "Unknown", (PackageEntry("b", "2"),))
    snap = VulnStore.from_records(inventories=[a, b])
    inv = snap.inventories["img"]
    assert inv.os_family.value == "Debian" and inv.names() == {"a", "b"}


def test_indexes(samples):
    for cve, refs in samples.by_cve.items():
        assert all(samples.record(r).cve_identifier == cve for r in refs)
    assert sum(len(v) for v in samples.by_image.values()) == len(samples.scan_results)
    assert set(samples.by_tool) == {r.tool_name for r in samples.scan_results}


@settings(max_examples=30)
@given(st.lists(small_records(), max_size=12), st.randoms(use_true_random=False))
def test_insertion_order_does_not_matter(recs, rnd):
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    a = VulnStore.from_records(recs)
    b = VulnStore.from_records(shuffled)
    assert a.fingerprint() == b.fingerprint()
    assert a.severity_mismatch_pairs("cve_identifier") == b.severity_mismatch_pairs("cve_identifier")


@settings(max_examples=30)
@given(st.lists(small_records(), max_size=12))
def test_group_counts_sum_to_total(recs):
    snap = VulnStore.from_records(recs)
    assert sum(snap.group_count(["tool_name", "severity"]).values()) == len(snap.scan_results)
