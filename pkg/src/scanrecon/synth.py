"""Deterministic synthetic corpora with an injection ledger.

A corpus is a set of images, their package inventories, multi-tool scan rows
and one NVD advisory per CVE. Every CVE has a ground-truth rating; a chosen
subset is made inconsistent by adding rows that satisfy exactly the predicate
of one or more levels. The ledger records what was injected where, so the
detector and resolver can be scored without hand labels.

Resolution groups are laid out one after another over the inconsistent CVEs::

    [L6-solvable][L5-solvable][L4-solvable][L3-solvable][L2-solvable][residual]

and level membership is then topped up from groups that are resolved at a
lower level, so the resolved counts per level are fixed by construction.
"""
from __future__ import annotations

import csv
import enum
import functools
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .cvss import CvssVector, all_vectors, base_score
from .detect import LevelBreakdown, LevelId
from .model import (
    UNAPPROVED,
    AdvisoryRecord,
    Assigner,
    PackageEntry,
    PackageInventory,
    PackageType,
    Severity,
    VulnRecord,
    is_clair_tool,
)
from .resolve import CREDIBLE_ASSIGNERS, OS_SOURCE, ResolutionOutcome
from .store import StoreSnapshot, VulnStore, write_snapshot


class SynthError(ValueError):
    pass


class Kind(str, enum.Enum):
    NAME_MISMATCH = "NameMismatch"
    VERSION_MISMATCH = "VersionMismatch"
    ASSIGNER_DIVERGENCE = "AssignerDivergence"
    STALE_MODIFICATION_TIME = "StaleModificationTime"
    INTRA_TOOL_DUPLICATE = "IntraToolDuplicate"


# a residual CVE that disagrees only through a second plain rating
RATING_ONLY = "RatingOnly"

KIND_LEVEL = {
    Kind.NAME_MISMATCH: LevelId.L2,
    Kind.VERSION_MISMATCH: LevelId.L3,
    Kind.ASSIGNER_DIVERGENCE: LevelId.L4,
    Kind.STALE_MODIFICATION_TIME: LevelId.L5,
    Kind.INTRA_TOOL_DUPLICATE: LevelId.L6,
}
LEVEL_KIND = {lv: k for k, lv in KIND_LEVEL.items()}

# level shares of all inconsistent CVEs, as observed on the 168-image study
DEFAULT_MIX = {
    Kind.NAME_MISMATCH: 0.4910,
    Kind.VERSION_MISMATCH: 0.1300,
    Kind.ASSIGNER_DIVERGENCE: 0.9500,
    Kind.STALE_MODIFICATION_TIME: 0.5750,
    Kind.INTRA_TOOL_DUPLICATE: 0.1800,
}
# share of inconsistent CVEs newly resolved at each level, bottom-up
DEFAULT_SOLVABLE = {
    Kind.INTRA_TOOL_DUPLICATE: 0.1800,
    Kind.STALE_MODIFICATION_TIME: 0.3960,
    Kind.ASSIGNER_DIVERGENCE: 0.0036,
    Kind.VERSION_MISMATCH: 0.0168,
    Kind.NAME_MISMATCH: 0.1120,
}
# None, Low, Medium, High, Critical; the published shares add to 99.98%
_RAW_SHARES = (0.0344, 0.0753, 0.4740, 0.3640, 0.0521)
DEFAULT_CLASS_SHARES = tuple(s / sum(_RAW_SHARES) for s in _RAW_SHARES)

NON_CREDIBLE_ASSIGNERS = ("GHSA", "Debian", "SUSE", "Oracle", "Mitre", "Snyk", "Alpine")
FAMILIES = (PackageType.DEBIAN, PackageType.ALPINE, PackageType.REDHAT)
EPOCH = datetime(2023, 1, 1, tzinfo=timezone.utc)


def _count(fraction: float, total: int) -> int:
    """Round-half-up of ``fraction * total`` (tolerant of float noise)."""
    return int(math.floor(fraction * total + 0.5 + 1e-9))


def apportion(shares, total: int) -> list[int]:
    """Floor each share, then hand out the remainder one by one in index order."""
    counts = [int(math.floor(s * total + 1e-9)) for s in shares]
    rest = total - sum(counts)
    i = 0
    while rest > 0:
        counts[i % len(counts)] += 1
        rest -= 1
        i += 1
    return counts


def _kind_map(raw) -> dict:
    return {Kind(k): float(v) for k, v in dict(raw).items()}


@dataclass(frozen=True)
class CorpusConfig:
    image_count: int = 168
    cves_per_image: int = 22
    # overrides image_count * cves_per_image when set
    distinct_cves: Optional[int] = 3766
    tool_names: tuple = ("trivy", "snyk", "clair")
    inconsistency_mix: dict = field(default_factory=lambda: dict(DEFAULT_MIX))
    inconsistent_fraction: float = 1669 / 3766
    hard_fp_count: int = 40
    soft_fp_count: int = 40
    solvable_mix: dict = field(default_factory=lambda: dict(DEFAULT_SOLVABLE))
    class_shares: tuple = DEFAULT_CLASS_SHARES
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tool_names", tuple(self.tool_names))
        object.__setattr__(self, "class_shares", tuple(float(s) for s in self.class_shares))
        object.__setattr__(self, "inconsistency_mix", _kind_map(self.inconsistency_mix))
        object.__setattr__(self, "solvable_mix", _kind_map(self.solvable_mix))
        for name in ("image_count", "cves_per_image", "hard_fp_count", "soft_fp_count"):
            if getattr(self, name) < 0:
                raise SynthError(f"{name} must be >= 0")
        if self.distinct_cves is not None and self.distinct_cves < 0:
            raise SynthError("distinct_cves must be >= 0")
        fracs = [self.inconsistent_fraction, *self.inconsistency_mix.values(),
                 *self.solvable_mix.values(), *self.class_shares]
        if any(not 0.0 <= f <= 1.0 for f in fracs):
            raise SynthError("fractions must lie in [0, 1]")
        if len(self.class_shares) != len(Severity):
            raise SynthError("class_shares needs one entry per severity class")
        if abs(sum(self.class_shares) - 1.0) > 1e-9:
            raise SynthError(f"class_shares sum to {sum(self.class_shares)!r}, not 1")
        if not self.tool_names:
            raise SynthError("at least one tool name is required")

    @property
    def cve_total(self) -> int:
        if self.distinct_cves is not None:
            return self.distinct_cves
        return self.image_count * self.cves_per_image

    @property
    def inconsistent_total(self) -> int:
        return _count(self.inconsistent_fraction, self.cve_total)

    def level_targets(self) -> dict[LevelId, int]:
        n = self.inconsistent_total
        return {KIND_LEVEL[k]: _count(self.inconsistency_mix.get(k, 0.0), n) for k in Kind}

    def solvable_targets(self) -> dict[LevelId, int]:
        n = self.inconsistent_total
        return {KIND_LEVEL[k]: _count(self.solvable_mix.get(k, 0.0), n) for k in Kind}

    def to_mapping(self) -> dict:
        d = asdict(self)
        d["tool_names"] = list(self.tool_names)
        d["class_shares"] = list(self.class_shares)
        d["inconsistency_mix"] = {k.value: v for k, v in self.inconsistency_mix.items()}
        d["solvable_mix"] = {k.value: v for k, v in self.solvable_mix.items()}
        return d

    @classmethod
    def from_mapping(cls, data: dict) -> "CorpusConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise SynthError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "CorpusConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SynthError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise SynthError("config must be a JSON object")
        return cls.from_mapping(data)


@dataclass(frozen=True)
class LedgerEntry:
    artifact: str  # cve, hard_fp or soft_fp
    cve_identifier: str
    ground_truth: Severity
    inconsistent: bool = False
    kinds: tuple = ()
    expected_level: Optional[LevelId] = None
    credible: bool = False
    record_id: str = ""

    @property
    def solvable(self) -> bool:
        return self.expected_level is not None


LEDGER_FIELDS = ("artifact", "cve_identifier", "ground_truth", "inconsistent", "kinds",
                 "solvable", "expected_level", "credible", "record_id")


@dataclass(frozen=True)
class SyntheticCorpus:
    config: CorpusConfig
    scan_records: tuple
    advisories: tuple
    inventories: tuple
    ledger: tuple

    @functools.cached_property
    def snapshot(self) -> StoreSnapshot:
        return VulnStore.from_records(self.scan_records, self.advisories, self.inventories)

    def cve_entries(self) -> list[LedgerEntry]:
        return [e for e in self.ledger if e.artifact == "cve"]

    def ground_truth(self) -> dict[str, Severity]:
        return {e.cve_identifier: e.ground_truth for e in self.cve_entries()}

    def injected(self, kind) -> set[str]:
        kind = Kind(kind)
        return {e.cve_identifier for e in self.cve_entries() if kind in e.kinds}

    def fp_ids(self, artifact: str) -> set[str]:
        return {e.record_id for e in self.ledger if e.artifact == artifact}

    def ledger_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(LEDGER_FIELDS)
        for e in self.ledger:
            w.writerow([
                e.artifact, e.cve_identifier, e.ground_truth.label, int(e.inconsistent),
                "+".join(k.value if isinstance(k, Kind) else k for k in e.kinds),
                int(e.solvable), e.expected_level.value if e.expected_level else "",
                int(e.credible), e.record_id,
            ])
        return buf.getvalue()

    def summary(self) -> dict:
        entries = self.cve_entries()
        inconsistent = sum(e.inconsistent for e in entries)
        levels = {}
        for kind in Kind:
            n = len(self.injected(kind))
            levels[KIND_LEVEL[kind].value] = {
                "kind": kind.value, "cves": n,
                "percent": round(100.0 * n / inconsistent, 2) if inconsistent else 0.0,
            }
        solvable = {}
        for lv in (LevelId.L6, LevelId.L5, LevelId.L4, LevelId.L3, LevelId.L2):
            solvable[lv.value] = sum(e.expected_level is lv for e in entries)
        return {
            "images": self.config.image_count,
            "distinct_cves": len(entries),
            "inconsistent_cves": inconsistent,
            "scan_records": len(self.scan_records),
            "advisories": len(self.advisories),
            "levels": levels,
            "solvable": solvable,
            "hard_false_positives": len(self.fp_ids("hard_fp")),
            "soft_false_positives": len(self.fp_ids("soft_fp")),
        }

    def write(self, directory) -> list[Path]:
        directory = Path(directory)
        paths = write_snapshot(self.snapshot, directory)
        ledger = directory / "ledger.csv"
        with open(ledger, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.ledger_csv())
        return paths + [ledger]


# -- CVSS sampling -----------------------------------------------------------

@functools.lru_cache(maxsize=1)
def _band_buckets() -> dict[Severity, tuple[CvssVector, ...]]:
    buckets: dict[Severity, list] = {s: [] for s in Severity}
    for v in all_vectors():
        buckets[base_score(v).severity].append(v)
    return {s: tuple(vs) for s, vs in buckets.items()}


def sample_vector(rng: np.random.Generator, band: Severity) -> CvssVector:
    """Uniform draw from the base-vector grid conditioned on its rating band.

    Same distribution as drawing uniformly from all vectors and rejecting
    draws in other bands, at a fixed cost per call.
    """
    bucket = _band_buckets()[Severity(band)]
    return bucket[int(rng.integers(len(bucket)))]


def _shuffled_labels(rng, shares, n) -> np.ndarray:
    counts = apportion(shares, n)
    labels = np.repeat(np.arange(len(counts)), counts)
    rng.shuffle(labels)
    return labels


def synthetic_advisories(n: int, class_shares=DEFAULT_CLASS_SHARES, seed: int = 0,
                         assigner: str = "NVD") -> list[AdvisoryRecord]:
    """``n`` advisories with CVSS vectors whose bands follow ``class_shares``."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    labels = _shuffled_labels(rng, class_shares, n)
    out = []
    for i, code in enumerate(labels):
        sev = Severity(int(code))
        out.append(AdvisoryRecord(
            cve_identifier=f"CVE-2099-{i:06d}",
            cve_assigner=Assigner(assigner),
            severity=sev,
            raw_severity_label=sev.name,
            modification_time=EPOCH + timedelta(hours=i),
            cvss=sample_vector(rng, sev),
        ))
    return out


# -- corpus construction -----------------------------------------------------

def _plan_groups(config: CorpusConfig, rng):
    """Assign every inconsistent CVE index its kinds and resolution level."""
    n = config.inconsistent_total
    m = config.level_targets()
    r = config.solvable_targets()
    L2, L3, L4, L5, L6 = (LevelId.L2, LevelId.L3, LevelId.L4, LevelId.L5, LevelId.L6)

    if sum(r.values()) > n:
        raise SynthError(f"solvable shares ask for {sum(r.values())} of {n} inconsistent CVEs")
    # every L6 finding is resolved at L6, so the two counts must agree
    if m[L6] != r[L6]:
        raise SynthError(f"L6 membership {m[L6]} must equal L6 solvable count {r[L6]}")
    if not r[L5] <= m[L5] <= r[L5] + r[L6]:
        raise SynthError(f"L5 membership {m[L5]} must lie in [{r[L5]}, {r[L5] + r[L6]}]")

    bounds, start = {}, 0
    for lv in (L6, L5, L4, L3, L2):
        bounds[lv] = range(start, start + r[lv])
        start += r[lv]
    residual = list(range(start, n))
    kinds = [set() for _ in range(n)]
    level = [None] * n

    for lv in (L6, L5, L4, L3, L2):
        for i in bounds[lv]:
            kinds[i].add(LEVEL_KIND[lv])
            level[i] = lv
    for i in list(bounds[L6])[: m[L5] - r[L5]]:
        kinds[i].add(Kind.STALE_MODIFICATION_TIME)

    upper = list(bounds[L6]) + list(bounds[L5])

    def top_up(lv, pools):
        need = m[lv] - sum(LEVEL_KIND[lv] in k for k in kinds)
        if need < 0:
            raise SynthError(f"{lv.value} target {m[lv]} is below its solvable count")
        for pool in pools:
            pool = [i for i in pool if LEVEL_KIND[lv] not in kinds[i]]
            take = min(need, len(pool))
            if take:
                picked = rng.choice(len(pool), size=take, replace=False)
                for j in sorted(picked):
                    kinds[pool[j]].add(LEVEL_KIND[lv])
            need -= take
        if need > 0:
            raise SynthError(f"cannot reach {lv.value} target {m[lv]}: {need} CVEs short")

    # residual rows enter L4 only through non-credible assigners, which stay unresolved
    top_up(L4, [residual, list(bounds[L2]), list(bounds[L3]), upper])
    top_up(L3, [upper, list(bounds[L4])])
    top_up(L2, [upper, list(bounds[L4]), list(bounds[L3])])
    for i in residual:
        if not kinds[i]:
            kinds[i].add(RATING_ONLY)
    return kinds, level


class _Builder:
    def __init__(self, config: CorpusConfig):
        self.config = config
        tools = config.tool_names
        self.rated_tools = [t for t in tools if not is_clair_tool(t)]
        clair = [t for t in tools if is_clair_tool(t)]
        # rows without assigner/time go to a Clair-style tool when there is one
        self.plain_tool = clair[0] if clair else tools[-1]
        self.scan: list[VulnRecord] = []
        self.packages: dict[int, set] = {}
        self.pkg_serial = 0

    def new_package(self, rng) -> tuple[str, str]:
        self.pkg_serial += 1
        name = f"pkg{self.pkg_serial:05d}"
        version = f"{rng.integers(0, 10)}.{rng.integers(0, 30)}.{rng.integers(0, 20)}"
        return name, version


def generate_corpus(config: CorpusConfig = CorpusConfig()) -> SyntheticCorpus:
    """Build a corpus and its ledger; identical output for identical config."""
    seeds = np.random.SeedSequence(config.seed).spawn(5)
    rng_plan, rng_truth, rng_rows, rng_fp, rng_adv = (np.random.default_rng(s) for s in seeds)

    N = config.cve_total
    n = config.inconsistent_total
    if n > N:
        raise SynthError("more inconsistent CVEs than CVEs")
    if N == 0 and config.inconsistent_fraction > 0 and any(config.inconsistency_mix.values()):
        raise SynthError("inconsistencies requested but the corpus has no CVEs")
    if N > 0 and config.image_count == 0:
        raise SynthError("CVEs need at least one image")
    kinds, expected = _plan_groups(config, rng_plan) if n else ([], [])
    b = _Builder(config)

    needs_assigner = any(k & {Kind.ASSIGNER_DIVERGENCE, Kind.STALE_MODIFICATION_TIME,
                              Kind.INTRA_TOOL_DUPLICATE} for k in kinds)
    if needs_assigner and not b.rated_tools:
        raise SynthError("assigner-based kinds need a tool that reports assigners")
    if any(Kind.INTRA_TOOL_DUPLICATE in k for k in kinds) and config.image_count < 2:
        raise SynthError("intra-tool duplicates need at least two images")
    if config.hard_fp_count + config.soft_fp_count > N - n:
        raise SynthError("false positives are placed on consistent CVEs; not enough of them")

    families = [FAMILIES[int(i)] for i in rng_rows.integers(0, len(FAMILIES), config.image_count)]
    images = [f"image-{i:03d}" for i in range(config.image_count)]
    inventory: dict[int, set] = {i: set() for i in range(config.image_count)}

    truth = _shuffled_labels(rng_truth, config.class_shares, N)
    # inconsistent CVEs take positions 0..n-1; ids are shuffled so position carries no signal
    id_order = rng_truth.permutation(N)
    cve_ids = [f"CVE-2099-{int(k):06d}" for k in id_order]

    ledger = []
    advisories = []
    base_rows = {}
    for idx in range(N):
        cve = cve_ids[idx]
        g = Severity(int(truth[idx]))
        home = idx % config.image_count
        fam = families[home]
        img = images[home]
        p, v = b.new_package(rng_rows)
        inventory[home].add((p, v))
        t_new = EPOCH + timedelta(hours=2000 + int(rng_rows.integers(0, 6000)))
        ks = kinds[idx] if idx < n else set()
        lv = expected[idx] if idx < n else None
        w = Severity(int((g + rng_rows.integers(1, len(Severity))) % len(Severity)))

        if lv is LevelId.L4:
            a0 = OS_SOURCE[fam]
            a1 = [a for a in CREDIBLE_ASSIGNERS if a != a0][int(rng_rows.integers(0, 2))]
            credible = True
        elif lv in (LevelId.L6, LevelId.L5):
            a0 = CREDIBLE_ASSIGNERS[int(rng_rows.integers(0, 3))]
            a1 = NON_CREDIBLE_ASSIGNERS[int(rng_rows.integers(0, len(NON_CREDIBLE_ASSIGNERS)))]
            credible = False
        else:
            pick = rng_rows.choice(len(NON_CREDIBLE_ASSIGNERS), size=2, replace=False)
            a0, a1 = (NON_CREDIBLE_ASSIGNERS[int(j)] for j in pick)
            credible = False
        tool = b.rated_tools[int(rng_rows.integers(0, len(b.rated_tools)))] if b.rated_tools else b.plain_tool
        assigner = a0 if b.rated_tools else None
        mtime = t_new if b.rated_tools else None

        def row(severity, *, image=img, tool_name=tool, pkg=p, ver=v, assigner=assigner,
                mtime=mtime, ptype=fam):
            rec = VulnRecord(image, tool_name, cve, pkg, ver, severity, ptype, assigner, mtime)
            b.scan.append(rec)
            return rec

        def plain(severity, pkg=p, ver=v):
            return row(severity, tool_name=b.plain_tool, pkg=pkg, ver=ver, assigner=None, mtime=None)

        base_rows[idx] = (row(g), img, fam, p, v, home)
        plain(g)
        if Kind.NAME_MISMATCH in ks:
            p2, v2 = b.new_package(rng_rows)
            inventory[home].add((p2, v2))
            plain(w, pkg=p2, ver=v2)
        if Kind.VERSION_MISMATCH in ks:
            v3 = f"{v}+deb{int(rng_rows.integers(1, 9))}"
            inventory[home].add((p, v3))
            plain(w, ver=v3)
        if Kind.ASSIGNER_DIVERGENCE in ks:
            other = b.rated_tools[int(rng_rows.integers(0, len(b.rated_tools)))]
            row(w, tool_name=other, assigner=a1)
        if Kind.STALE_MODIFICATION_TIME in ks:
            other = b.rated_tools[int(rng_rows.integers(0, len(b.rated_tools)))]
            stale = t_new - timedelta(hours=1 + int(rng_rows.integers(0, 1500)))
            row(w, tool_name=other, mtime=stale)
        if Kind.INTRA_TOOL_DUPLICATE in ks:
            row(w)
            sib = (home + 1) % config.image_count
            inventory[sib].add((p, v))
            row(g, image=images[sib], ptype=families[sib])
        if RATING_ONLY in ks:
            plain(w)

        ordered = tuple(k for k in (*Kind, RATING_ONLY) if k in ks)
        ledger.append(LedgerEntry("cve", cve, g, idx < n, ordered, lv, credible))
        advisories.append(AdvisoryRecord(cve, Assigner.NVD, g, g.name, t_new,
                                         sample_vector(rng_adv, g)))

    # false positives ride on consistent CVEs so they never change a level count
    fp_pool = rng_fp.permutation(np.arange(n, N))
    for k in range(config.hard_fp_count):
        idx = int(fp_pool[k])
        rec, img, fam, p, v, home = base_rows[idx]
        ghost = replace(rec, package_name=f"phantom{k:04d}", package_version="0.0.1",
                        severity=UNAPPROVED)
        b.scan.append(ghost)
        ledger.append(LedgerEntry("hard_fp", rec.cve_identifier, rec.severity,
                                  record_id=ghost.record_id))
    for k in range(config.soft_fp_count):
        idx = int(fp_pool[config.hard_fp_count + k])
        rec, img, fam, p, v, home = base_rows[idx]
        stray = VulnRecord(img, b.plain_tool, rec.cve_identifier, p, f"{v}-unlisted{k}",
                           rec.severity, fam)
        b.scan.append(stray)
        ledger.append(LedgerEntry("soft_fp", rec.cve_identifier, rec.severity,
                                  record_id=stray.record_id))

    inventories = tuple(
        PackageInventory(images[i], families[i],
                         tuple(PackageEntry(name, ver) for name, ver in sorted(inventory[i])))
        for i in range(config.image_count)
    )
    return SyntheticCorpus(config, tuple(b.scan), tuple(advisories), inventories, tuple(ledger))


# -- scoring -----------------------------------------------------------------

@dataclass(frozen=True)
class HarnessScore:
    detection_recall: dict
    detection_precision: dict
    resolution_accuracy: dict
    hard_fp_recall: Optional[float]
    hard_fp_precision: Optional[float]
    soft_fp_recall: Optional[float]
    soft_fp_precision: Optional[float]
    resolved_fraction: float
    expected_level_agreement: Optional[float]

    def to_dict(self) -> dict:
        return {
            "detection_recall": {k.value: v for k, v in self.detection_recall.items()},
            "detection_precision": {k.value: v for k, v in self.detection_precision.items()},
            "resolution_accuracy": {k.value: v for k, v in self.resolution_accuracy.items()},
            "hard_fp_recall": self.hard_fp_recall,
            "hard_fp_precision": self.hard_fp_precision,
            "soft_fp_recall": self.soft_fp_recall,
            "soft_fp_precision": self.soft_fp_precision,
            "resolved_fraction": self.resolved_fraction,
            "expected_level_agreement": self.expected_level_agreement,
        }


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def evaluate_pipeline(corpus: SyntheticCorpus, breakdown: LevelBreakdown,
                      outcome: ResolutionOutcome) -> HarnessScore:
    """Score detection, resolution and false-positive handling against the ledger."""
    fp = corpus.snapshot.fingerprint()
    if breakdown.fingerprint != fp or outcome.fingerprint != fp:
        raise SynthError("breakdown/outcome were not computed from this corpus")
    recall, precision = {}, {}
    for kind in Kind:
        injected = corpus.injected(kind)
        found = breakdown.cves.get(KIND_LEVEL[kind], frozenset())
        recall[kind] = _ratio(len(injected & found), len(injected))
        precision[kind] = _ratio(len(injected & found), len(found))

    truth = corpus.ground_truth()
    accuracy = {}
    for lv in (LevelId.L6, LevelId.L5, LevelId.L4, LevelId.L3, LevelId.L2):
        fixed = [c for c, r in outcome.resolved.items() if r.level is lv]
        accuracy[lv] = _ratio(sum(outcome.resolved[c].severity == truth.get(c) for c in fixed),
                              len(fixed))

    hard = corpus.fp_ids("hard_fp")
    removed = set(outcome.removed_false_positives)
    soft = corpus.fp_ids("soft_fp")
    flagged = set(outcome.soft_false_positives)

    expected = {e.cve_identifier: e.expected_level for e in corpus.cve_entries() if e.inconsistent}
    agree = sum(
        (outcome.resolved[c].level if c in outcome.resolved else None) is lv
        for c, lv in expected.items()
    )
    return HarnessScore(
        detection_recall=recall,
        detection_precision=precision,
        resolution_accuracy=accuracy,
        hard_fp_recall=_ratio(len(hard & removed), len(hard)),
        hard_fp_precision=_ratio(len(hard & removed), len(removed)),
        soft_fp_recall=_ratio(len(soft & flagged), len(soft)),
        soft_fp_precision=_ratio(len(soft & flagged), len(flagged)),
        resolved_fraction=outcome.resolved_fraction,
        expected_level_agreement=_ratio(agree, len(expected)),
    )
