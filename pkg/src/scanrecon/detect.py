"""Severity-inconsistency levels and package-based false-positive checks.

Levels (all computed on scan rows, Unapproved rows ignored):

====  =================================================================
L1    CVE carries two or more distinct ratings
L2    same image and CVE, different package name
L3    same image, CVE and package name, different version
L4    same CVE, different assigner
L5    same CVE and assigner, different modification time
L6    same CVE, assigner, modification time and tool
====  =================================================================

Each level additionally requires the paired rows to disagree on severity.
Levels are independent, so a CVE may show up at several of them. Rows
without an assigner never take part in L4-L6; missing modification times
compare equal to each other and unequal to any concrete time.
"""
from __future__ import annotations

import csv
import dataclasses
import enum
import io
import json
from collections import defaultdict
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Optional

from .model import UNAPPROVED, PackageType, VulnRecord
from .store import StoreSnapshot


class LevelId(str, enum.Enum):
    L1 = "L1"
    L2 = "L2"
    L3 = "L3"
    L4 = "L4"
    L5 = "L5"
    L6 = "L6"


DETAIL_LEVELS = (LevelId.L2, LevelId.L3, LevelId.L4, LevelId.L5, LevelId.L6)

LEVEL_NAMES = {
    LevelId.L1: "Inconsistent CVEs ALL",
    LevelId.L2: "Package Name Inconsistent CVEs",
    LevelId.L3: "Package Version Inconsistent CVEs",
    LevelId.L4: "Different Assigner Inconsistent CVEs",
    LevelId.L5: "Same Assigner Different Modification Time Inconsistent CVEs",
    LevelId.L6: "Same Assigner Same Modification Time Inconsistent CVEs",
}

# (fields shared by the group, field that must differ inside it or None)
_PREDICATES = {
    LevelId.L2: (("image_name", "cve_identifier"), "package_name"),
    LevelId.L3: (("image_name", "cve_identifier", "package_name"), "package_version"),
    LevelId.L4: (("cve_identifier",), "assigner"),
    LevelId.L5: (("cve_identifier", "assigner"), "modification_time"),
    LevelId.L6: (("cve_identifier", "assigner", "modification_time", "tool_name"), None),
}
_NEEDS_ASSIGNER = {LevelId.L4, LevelId.L5, LevelId.L6}


class DetectError(ValueError):
    pass


@dataclass(frozen=True)
class Finding:
    level: LevelId
    cve_identifier: str
    evidence: tuple[int, ...]
    note: str = ""


@dataclass(frozen=True)
class LevelBreakdown:
    counts: dict
    percents: dict
    l1_total: int
    image_count: int
    per_image_average: Fraction
    fingerprint: str = ""
    cves: dict = dataclasses.field(default_factory=dict, repr=False, compare=False)

    @property
    def per_image_average_2dp(self) -> Decimal:
        return round_half_up(self.per_image_average)

    def rows(self) -> list[tuple[str, str, int, str]]:
        out = []
        for level in LevelId:
            out.append((level.value, LEVEL_NAMES[level], self.counts[level],
                        f"{self.percents[level]:.2f}"))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["level", "count", "percent"])
        for level, _, count, pct in self.rows():
            w.writerow([level, count, pct])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "levels": [
                {"level": lv, "name": name, "count": c, "percent": float(p)}
                for lv, name, c, p in self.rows()
            ],
            "l1_total": self.l1_total,
            "image_count": self.image_count,
            "per_image_average": str(self.per_image_average_2dp),
        }


def round_half_up(value: Fraction, places: int = 2) -> Decimal:
    exact = Decimal(value.numerator) / Decimal(value.denominator)
    return exact.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)


def _rated_scan(snapshot: StoreSnapshot):
    for ref in snapshot.scan_refs:
        rec = snapshot.record(ref)
        if rec.severity is not UNAPPROVED:
            yield ref, rec


def inconsistent_cves(snapshot: StoreSnapshot) -> set[str]:
    """CVEs whose scan rows carry at least two distinct ratings."""
    ratings = defaultdict(set)
    for _, rec in _rated_scan(snapshot):
        ratings[rec.cve_identifier].add(rec.severity)
    return {cve for cve, sevs in ratings.items() if len(sevs) > 1}


def _group_evidence(members: list[tuple[int, VulnRecord]], differ: Optional[str]) -> list[int]:
    """Refs in ``members`` that pair with some row differing in severity (and ``differ``)."""
    if differ is None:
        if len({r.severity for _, r in members}) < 2:
            return []
        return sorted(ref for ref, _ in members)
    # bucket by (differ value, severity); a row qualifies when some other row
    # has another differ value and another severity
    by_val = defaultdict(lambda: defaultdict(int))
    for _, r in members:
        by_val[getattr(r, differ)][r.severity] += 1
    total_by_sev = defaultdict(int)
    for sevs in by_val.values():
        for s, n in sevs.items():
            total_by_sev[s] += n
    total = sum(total_by_sev.values())
    out = []
    for ref, r in members:
        same_val = by_val[getattr(r, differ)]
        val_total = sum(same_val.values())
        # rows outside this value bucket whose severity differs from r's
        others = (total - val_total) - (total_by_sev[r.severity] - same_val[r.severity])
        if others > 0:
            out.append(ref)
    return sorted(out)


def level_findings(snapshot: StoreSnapshot, level) -> list[Finding]:
    """Findings for one of L2..L6, one per matching group, sorted by (cve, evidence)."""
    level = LevelId(level)
    if level is LevelId.L1:
        raise DetectError("L1 is not pair-based; use inconsistent_cves()")
    shared, differ = _PREDICATES[level]
    groups = defaultdict(list)
    for ref, rec in _rated_scan(snapshot):
        if level in _NEEDS_ASSIGNER and rec.assigner is None:
            continue
        groups[tuple(getattr(rec, f) for f in shared)].append((ref, rec))
    findings = []
    for key, members in groups.items():
        if len(members) < 2:
            continue
        evidence = _group_evidence(members, differ)
        if len(evidence) < 2:
            continue
        cve = members[0][1].cve_identifier
        note = ", ".join(f"{f}={_show(v)}" for f, v in zip(shared, key) if f != "cve_identifier")
        findings.append(Finding(level, cve, tuple(evidence), note))
    findings.sort(key=lambda f: (f.cve_identifier, f.evidence))
    return findings


def _show(value) -> str:
    if value is None:
        return "-"
    if hasattr(value, "isoformat"):
        return value.isoformat()
    return str(value)


def all_findings(snapshot: StoreSnapshot) -> dict[LevelId, list[Finding]]:
    return {level: level_findings(snapshot, level) for level in DETAIL_LEVELS}


def level_breakdown(snapshot: StoreSnapshot, findings=None) -> LevelBreakdown:
    """Distinct-CVE counts per level and their share of the L1 total."""
    image_count = len(snapshot.images())
    if image_count == 0:
        raise DetectError("store holds no images")
    if findings is None:
        findings = all_findings(snapshot)
    l1 = inconsistent_cves(snapshot)
    cves = {LevelId.L1: frozenset(l1)}
    for level in DETAIL_LEVELS:
        cves[level] = frozenset(f.cve_identifier for f in findings[level])
    counts = {level: len(found) for level, found in cves.items()}
    percents = {
        level: (100.0 * counts[level] / len(l1)) if l1 else 0.0 for level in LevelId
    }
    return LevelBreakdown(
        counts=counts,
        percents=percents,
        l1_total=len(l1),
        image_count=image_count,
        per_image_average=Fraction(len(l1), image_count),
        fingerprint=snapshot.fingerprint(),
        cves=cves,
    )


# -- package-based false positives ------------------------------------------

def _checkable(snapshot: StoreSnapshot, rec: VulnRecord):
    inv = snapshot.inventories.get(rec.image_name)
    if inv is None or inv.os_family is PackageType.UNKNOWN:
        return None
    return inv


def hard_false_positives(snapshot: StoreSnapshot) -> list[int]:
    """Scan rows naming a package that the image does not contain at all."""
    out = []
    for ref in snapshot.scan_refs:
        rec = snapshot.record(ref)
        inv = _checkable(snapshot, rec)
        if inv is not None and rec.package_name.lower() not in inv.names():
            out.append(ref)
    return out


def soft_false_positives(snapshot: StoreSnapshot) -> list[int]:
    """Scan rows whose package exists in the image, but not at the reported version."""
    out = []
    for ref in snapshot.scan_refs:
        rec = snapshot.record(ref)
        inv = _checkable(snapshot, rec)
        if inv is None:
            continue
        name = rec.package_name.lower()
        if name in inv.names() and rec.package_version not in inv.versions_of(name):
            out.append(ref)
    return out


def findings_report(snapshot: StoreSnapshot, findings=None, breakdown=None) -> str:
    """JSON document with every finding and the per-level breakdown."""
    if findings is None:
        findings = all_findings(snapshot)
    if breakdown is None:
        breakdown = level_breakdown(snapshot, findings)
    doc = {
        "breakdown": breakdown.to_dict(),
        "findings": [
            {
                "level": f.level.value,
                "cve_identifier": f.cve_identifier,
                "evidence": [snapshot.record(r).record_id for r in f.evidence],
                "note": f.note,
            }
            for level in DETAIL_LEVELS
            for f in findings[level]
        ],
    }
    return json.dumps(doc, indent=2) + "\n"
