"""Bottom-up conflict resolution with the Recent and Voting rules.

Levels are processed L6, L5, L4, L3, L2. A CVE fixed at one level is skipped
at every later one. L6/L5 keep the most recently modified rows and then vote;
L4 votes only among credible assigners, preferring the assigner that matches
the image's OS; L3/L2 vote directly.
"""
from __future__ import annotations

import csv
import dataclasses
import enum
import io
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .detect import (
    DetectError,
    LevelId,
    hard_false_positives,
    inconsistent_cves,
    level_findings,
    soft_false_positives,
)
from .model import UNAPPROVED, Assigner, PackageType, Severity, VulnRecord, canonical_assigner
from .store import IMAGE_PACKAGES, StoreSnapshot, VulnStore

BOTTOM_UP = (LevelId.L6, LevelId.L5, LevelId.L4, LevelId.L3, LevelId.L2)
CREDIBLE_ASSIGNERS = (Assigner.NVD.value, Assigner.REDHAT.value, Assigner.UBUNTU.value)

OS_SOURCE = {
    PackageType.DEBIAN: Assigner.UBUNTU.value,
    PackageType.REDHAT: Assigner.REDHAT.value,
    PackageType.ALPINE: Assigner.NVD.value,
    PackageType.UNKNOWN: Assigner.NVD.value,
}


class Method(str, enum.Enum):
    RECENT = "Recent"
    VOTING = "Voting"
    RECENT_THEN_VOTING = "RecentThenVoting"


class ResolveError(ValueError):
    pass


@dataclass(frozen=True)
class Resolution:
    severity: Severity
    level: LevelId
    method: Method


@dataclass(frozen=True)
class ResolutionOutcome:
    resolved: dict
    per_level_resolved: dict
    residual_inconsistent: frozenset
    removed_false_positives: tuple
    soft_false_positives: tuple
    per_image_average_after: Fraction
    image_count: int
    l1_total: int
    fingerprint: str = ""
    store: StoreSnapshot | None = dataclasses.field(default=None, repr=False, compare=False)

    @property
    def resolved_fraction(self) -> float:
        return len(self.resolved) / self.l1_total if self.l1_total else 0.0

    def resolution_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["cve_identifier", "resolved_severity", "level", "method"])
        for cve in sorted(self.resolved):
            r = self.resolved[cve]
            w.writerow([cve, r.severity.label, r.level.value, r.method.value])
        return buf.getvalue()

    def summary_rows(self) -> list[tuple[str, int, str]]:
        total = self.l1_total
        pct = lambda n: f"{100.0 * n / total:.2f}" if total else "0.00"
        rows = [("L1", len(self.resolved), pct(len(self.resolved)))]
        for level in (LevelId.L2, LevelId.L3, LevelId.L4, LevelId.L5, LevelId.L6):
            n = self.per_level_resolved.get(level, 0)
            rows.append((level.value, n, pct(n)))
        return rows

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["level", "resolved", "percent"])
        w.writerows(self.summary_rows())
        return buf.getvalue()

    def to_dict(self) -> dict:
        from .detect import round_half_up

        return {
            "summary": [
                {"level": lv, "resolved": n, "percent": float(p)}
                for lv, n, p in self.summary_rows()
            ],
            "resolved": [
                {"cve_identifier": cve, "severity": r.severity.label,
                 "level": r.level.value, "method": r.method.value}
                for cve, r in sorted(self.resolved.items())
            ],
            "residual_inconsistent": sorted(self.residual_inconsistent),
            "removed_false_positives": list(self.removed_false_positives),
            "soft_false_positives": list(self.soft_false_positives),
            "per_image_average_after": str(round_half_up(self.per_image_average_after)),
        }


# -- the two rules ----------------------------------------------------------

def recent_filter(records: Sequence[VulnRecord]) -> list[VulnRecord]:
    """Rows carrying the latest timestamp.

    Uses the per-assigner time when a row has one, else its modification
    time. Rows without any time are dropped once some row has one; if none
    has a time the input comes back unchanged.
    """
    records = list(records)
    if not records:
        raise ResolveError("recent_filter needs at least one record")
    stamped = [r for r in records if r.timestamp is not None]
    if not stamped:
        return records
    latest = max(r.timestamp for r in stamped)
    return [r for r in stamped if r.timestamp == latest]


def vote(items: Iterable) -> Severity:
    """Most frequent rating; a tie goes to the higher rating."""
    counts = Counter()
    for item in items:
        sev = getattr(item, "severity", item)
        if sev is UNAPPROVED:
            raise ResolveError("Unapproved rows cannot vote")
        counts[Severity(sev)] += 1
    if not counts:
        raise ResolveError("vote needs at least one rating")
    return max(counts, key=lambda s: (counts[s], s))


def source_priority_filter(records: Sequence, os_family) -> list:
    """Rows from the OS's own advisory source, or all rows if there are none."""
    source = OS_SOURCE[PackageType(os_family)]
    matched = [r for r in records if canonical_assigner(r.assigner) == source]
    return matched if matched else list(records)


def _dominant_family(records: Sequence[VulnRecord]) -> PackageType:
    counts = Counter(r.package_type for r in records)
    order = list(PackageType)
    return max(counts, key=lambda p: (counts[p], -order.index(p)))


def _resolve_group(level: LevelId, records: list[VulnRecord], credible: set[str]):
    if level in (LevelId.L6, LevelId.L5):
        recent = recent_filter(records)
        if len({r.severity for r in recent}) == 1:
            return recent[0].severity, Method.RECENT
        return vote(recent), Method.RECENT_THEN_VOTING
    if level is LevelId.L4:
        pool = [r for r in records if canonical_assigner(r.assigner) in credible]
        if not pool:
            return None
        pool = source_priority_filter(pool, _dominant_family(pool))
        return vote(pool), Method.VOTING
    return vote(records), Method.VOTING


def resolve_level(snapshot: StoreSnapshot, level, already_resolved=frozenset(),
                  credible_assigners: Iterable[str] = CREDIBLE_ASSIGNERS) -> dict[str, tuple[Severity, Method]]:
    """Resolve one level's findings, skipping CVEs fixed at lower levels.

    Evidence from every finding of a CVE at this level is pooled, so each CVE
    gets a single rating per level.
    """
    level = LevelId(level)
    if level is LevelId.L1:
        raise DetectError("L1 has no findings of its own")
    credible = {canonical_assigner(a) for a in credible_assigners}
    pooled: dict[str, set[int]] = defaultdict(set)
    for f in level_findings(snapshot, level):
        if f.cve_identifier not in already_resolved:
            pooled[f.cve_identifier].update(f.evidence)
    out = {}
    for cve in sorted(pooled):
        records = snapshot.records(sorted(pooled[cve]))
        result = _resolve_group(level, records, credible)
        if result is not None:
            out[cve] = result
    return out


# -- pipeline ---------------------------------------------------------------

def strip_false_positives(snapshot: StoreSnapshot, inventories=None):
    """Drop hard false positives and stale Unapproved duplicates.

    Returns ``(new_snapshot, removed_refs)`` where refs point into the input
    snapshot. Soft false positives stay in place.
    """
    if inventories is not None:
        store = VulnStore()
        store.add_records("scan_results", snapshot.scan_results)
        store.add_records("assigner_results", snapshot.assigner_results)
        store.add_records(IMAGE_PACKAGES, list(snapshot.image_packages) + list(inventories))
        base = store.seal()
        # refs of base equal refs of snapshot: scan/advisory rows are unchanged
        snapshot = base
    removed = set(hard_false_positives(snapshot))
    rated = set()
    for ref in snapshot.scan_refs:
        rec = snapshot.record(ref)
        if rec.severity is not UNAPPROVED:
            rated.add((rec.image_name, rec.tool_name, rec.cve_identifier))
    for ref in snapshot.scan_refs:
        rec = snapshot.record(ref)
        if rec.severity is UNAPPROVED and (rec.image_name, rec.tool_name, rec.cve_identifier) in rated:
            removed.add(ref)
    if not removed:
        return snapshot, []
    keep = [snapshot.record(r) for r in snapshot.scan_refs if r not in removed]
    stripped = VulnStore.from_records(keep, snapshot.assigner_results, snapshot.image_packages)
    return stripped, sorted(removed)


def rewrite_store(snapshot: StoreSnapshot, resolved: dict) -> StoreSnapshot:
    """Give every scan row of a resolved CVE its resolved rating."""
    rows = []
    for rec in snapshot.scan_results:
        r = resolved.get(rec.cve_identifier)
        if r is not None and rec.severity is not UNAPPROVED:
            sev = r.severity if isinstance(r, Resolution) else r[0]
            rec = dataclasses.replace(rec, severity=sev)
        rows.append(rec)
    return VulnStore.from_records(rows, snapshot.assigner_results, snapshot.image_packages)


def resolve_all(snapshot: StoreSnapshot, inventories=None,
                credible_assigners: Iterable[str] = CREDIBLE_ASSIGNERS) -> ResolutionOutcome:
    """Strip false positives, then resolve L6 through L2 in order.

    The outcome's ``store`` is the rewritten snapshot in which every resolved
    CVE is consistent.
    """
    fingerprint = snapshot.fingerprint()
    image_count = len(snapshot.images())
    cleaned, removed = strip_false_positives(snapshot, inventories)
    soft = tuple(soft_false_positives(cleaned))
    before = inconsistent_cves(cleaned)
    done: dict[str, Resolution] = {}
    per_level = {}
    for level in BOTTOM_UP:
        fixed = resolve_level(cleaned, level, frozenset(done), credible_assigners)
        per_level[level] = len(fixed)
        for cve, (sev, method) in fixed.items():
            done[cve] = Resolution(sev, level, method)
    residual = frozenset(before - set(done))
    return ResolutionOutcome(
        resolved=done,
        per_level_resolved=per_level,
        residual_inconsistent=residual,
        removed_false_positives=tuple(snapshot.record(r).record_id for r in removed),
        soft_false_positives=tuple(cleaned.record(r).record_id for r in soft),
        per_image_average_after=Fraction(len(residual), image_count) if image_count else Fraction(0),
        image_count=image_count,
        l1_total=len(before),
        fingerprint=fingerprint,
        store=rewrite_store(cleaned, done),
    )
