"""In-memory store over the three report tables.

A :class:`VulnStore` is filled, then sealed into an immutable
:class:`StoreSnapshot`. Queries only run on snapshots. Record handles
(``ref``) are integers assigned at seal time in (table, sorted row) order, so
every query result is reproducible regardless of insertion order.
"""
from __future__ import annotations

import csv
import hashlib
import io
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence, Union

from .cvss import parse_vector
from .model import (
    ADVISORY_FIELDS,
    IMAGE_PACKAGE_FIELDS,
    SCAN_FIELDS,
    UNAPPROVED,
    AdvisoryRecord,
    Assigner,
    Origin,
    PackageEntry,
    PackageInventory,
    PackageType,
    Severity,
    VulnRecord,
    parse_timestamp,
    severity_from_label,
)

SCAN_RESULTS = "scan_results"
ASSIGNER_RESULTS = "assigner_results"
IMAGE_PACKAGES = "image_packages"
TABLES = (SCAN_RESULTS, ASSIGNER_RESULTS, IMAGE_PACKAGES)

COLUMNS = {
    SCAN_RESULTS: SCAN_FIELDS,
    ASSIGNER_RESULTS: ADVISORY_FIELDS,
    IMAGE_PACKAGES: IMAGE_PACKAGE_FIELDS,
}

_KIND = {
    SCAN_RESULTS: VulnRecord,
    ASSIGNER_RESULTS: AdvisoryRecord,
    IMAGE_PACKAGES: PackageInventory,
}

MATCH_FIELDS = (
    "cve_identifier", "image_name", "package_name", "package_version",
    "assigner", "modification_time", "tool_name",
)
# fields an advisory row can be matched on
_ADVISORY_MATCH = {"cve_identifier", "assigner", "modification_time"}


class StoreError(Exception):
    pass


class SealedError(StoreError):
    pass


class CsvHeaderError(StoreError):
    pass


def _inventory_key(inv: PackageInventory):
    return inv.image_name


class VulnStore:
    """Mutable builder for a :class:`StoreSnapshot`."""

    def __init__(self):
        self._rows: dict[str, dict] = {t: {} for t in TABLES}
        self._sealed = False

    def add_records(self, kind: str, records: Iterable) -> int:
        """Append records to a table; exact duplicate rows are collapsed.

        Returns the number of rows actually inserted.
        """
        if self._sealed:
            raise SealedError("store is sealed")
        if kind not in _KIND:
            raise StoreError(f"unknown table {kind!r}")
        expected = _KIND[kind]
        table = self._rows[kind]
        inserted = 0
        for rec in records:
            if not isinstance(rec, expected):
                raise TypeError(
                    f"{kind} holds {expected.__name__}, got {type(rec).__name__}"
                )
            if kind == IMAGE_PACKAGES:
                key = rec.image_name
                if key in table:
                    old = table[key]
                    merged = PackageInventory(
                        rec.image_name,
                        rec.os_family if rec.os_family is not PackageType.UNKNOWN else old.os_family,
                        old.entries + rec.entries,
                    )
                    if merged != old:
                        table[key] = merged
                        inserted += 1
                    continue
            else:
                key = rec.content_values()
                if key in table:
                    continue
            table[key] = rec
            inserted += 1
        return inserted

    def import_csv(self, kind: str, text: str) -> int:
        if self._sealed:
            raise SealedError("store is sealed")
        return self.add_records(kind, rows_from_csv(kind, text))

    def seal(self) -> "StoreSnapshot":
        self._sealed = True
        return StoreSnapshot(
            scan_results=list(self._rows[SCAN_RESULTS].values()),
            assigner_results=list(self._rows[ASSIGNER_RESULTS].values()),
            image_packages=list(self._rows[IMAGE_PACKAGES].values()),
        )

    @classmethod
    def from_records(cls, scan=(), advisories=(), inventories=()) -> "StoreSnapshot":
        store = cls()
        store.add_records(SCAN_RESULTS, scan)
        store.add_records(ASSIGNER_RESULTS, advisories)
        store.add_records(IMAGE_PACKAGES, inventories)
        return store.seal()


@dataclass(frozen=True)
class MatchKey:
    fields: tuple[str, ...]

    def __post_init__(self):
        fields = tuple(self.fields)
        if not fields:
            raise ValueError("match key must name at least one field")
        if len(set(fields)) != len(fields):
            raise ValueError(f"duplicate fields in match key {fields}")
        bad = [f for f in fields if f not in MATCH_FIELDS]
        if bad:
            raise ValueError(f"unknown match fields {bad}")
        object.__setattr__(self, "fields", fields)


def _as_key(key) -> MatchKey:
    if isinstance(key, MatchKey):
        return key
    if isinstance(key, str):
        return MatchKey((key,))
    return MatchKey(tuple(key))


class StoreSnapshot:
    """Sealed, read-only view of the three tables."""

    def __init__(self, scan_results, assigner_results, image_packages):
        scan = sorted(scan_results, key=lambda r: r.content_values())
        adv = sorted(assigner_results, key=lambda r: r.content_values())
        inv = sorted(image_packages, key=_inventory_key)
        self._scan = tuple(scan)
        self._adv = tuple(adv)
        self._inv = tuple(inv)
        self._records = self._scan + self._adv
        self.scan_refs = range(0, len(scan))
        self.advisory_refs = range(len(scan), len(scan) + len(adv))

        by_cve = defaultdict(list)
        by_image = defaultdict(list)
        by_tool = defaultdict(list)
        by_assigner = defaultdict(list)
        for ref, rec in enumerate(self._records):
            by_cve[rec.cve_identifier].append(ref)
            by_assigner[rec.assigner].append(ref)
            if ref < len(scan):
                by_image[rec.image_name].append(ref)
                by_tool[rec.tool_name].append(ref)
        freeze = lambda d: MappingProxyType({k: tuple(v) for k, v in d.items()})
        self.by_cve = freeze(by_cve)
        self.by_image = freeze(by_image)
        self.by_tool = freeze(by_tool)
        self.by_assigner = freeze(by_assigner)
        self.inventories = MappingProxyType({i.image_name: i for i in inv})

    # -- access ------------------------------------------------------------
    @property
    def scan_results(self) -> tuple[VulnRecord, ...]:
        return self._scan

    @property
    def assigner_results(self) -> tuple[AdvisoryRecord, ...]:
        return self._adv

    @property
    def image_packages(self) -> tuple[PackageInventory, ...]:
        return self._inv

    def record(self, ref: int) -> Union[VulnRecord, AdvisoryRecord]:
        return self._records[ref]

    def records(self, refs: Iterable[int]) -> list:
        return [self._records[r] for r in refs]

    def ref_of(self, record) -> int:
        """Handle of a record equal to ``record`` (scan or advisory)."""
        if not hasattr(self, "_ref_index"):
            self._ref_index = {
                (type(r), r.content_values()): i for i, r in enumerate(self._records)
            }
        try:
            return self._ref_index[(type(record), record.content_values())]
        except KeyError:
            raise KeyError(f"record not in snapshot: {record!r}") from None

    def images(self) -> set[str]:
        return set(self.by_image) | set(self.inventories)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for table in TABLES:
            h.update(export_csv(self, table).encode("utf-8"))
        return h.hexdigest()[:20]

    def __len__(self):
        return len(self._records)

    def export_csv(self, kind: str) -> str:
        return export_csv(self, kind)

    # -- queries -----------------------------------------------------------
    def severity_mismatch_pairs(self, key, tables: Sequence[str] = (SCAN_RESULTS, ASSIGNER_RESULTS)):
        """Unordered ``(ref, ref)`` pairs equal on every key field but rated differently.

        Unapproved rows never pair. Advisory rows take part only when every key
        field exists on them (cve, assigner, modification time). Absent values
        compare equal to each other. Pairs come back sorted, smaller ref first.
        """
        key = _as_key(key)
        candidates = []
        if SCAN_RESULTS in tables:
            candidates.extend(self.scan_refs)
        if ASSIGNER_RESULTS in tables and set(key.fields) <= _ADVISORY_MATCH:
            candidates.extend(self.advisory_refs)
        groups: dict[tuple, dict[Severity, list[int]]] = defaultdict(lambda: defaultdict(list))
        for ref in candidates:
            rec = self._records[ref]
            if rec.severity is UNAPPROVED:
                continue
            k = tuple(getattr(rec, f) for f in key.fields)
            groups[k][rec.severity].append(ref)
        pairs = []
        for by_sev in groups.values():
            if len(by_sev) < 2:
                continue
            sevs = sorted(by_sev)
            for i, a in enumerate(sevs):
                for b in sevs[i + 1:]:
                    for x in by_sev[a]:
                        for y in by_sev[b]:
                            pairs.append((x, y) if x < y else (y, x))
        pairs.sort()
        return pairs

    def group_count(self, dimensions: Sequence[str]) -> dict[tuple, int]:
        """Counts of scan rows partitioned by the given fields (GROUP BY)."""
        dims = list(dimensions)
        valid = set(SCAN_FIELDS)
        bad = [d for d in dims if d not in valid]
        if bad:
            raise StoreError(f"unknown field(s) {bad}; choose from {SCAN_FIELDS}")
        counts = Counter()
        for rec in self._scan:
            counts[tuple(_plain(getattr(rec, d)) for d in dims)] += 1
        return dict(sorted(counts.items(), key=lambda kv: tuple(map(_sort_token, kv[0]))))


def _plain(value):
    if isinstance(value, (Severity,)) or value is UNAPPROVED:
        return value.label
    if isinstance(value, PackageType):
        return value.value
    return value


def _sort_token(v):
    return (v is None, str(v) if v is not None else "")


# -- CSV persistence --------------------------------------------------------

def _row_values(kind: str, rec) -> list[list[str]]:
    if kind == IMAGE_PACKAGES:
        if not rec.entries:
            return [[rec.image_name, rec.os_family.value, "", "", ""]]
        return [
            [rec.image_name, rec.os_family.value, e.name, e.version, e.origin.value]
            for e in rec.entries
        ]
    values = list(rec.content_values())
    if kind == SCAN_RESULTS:
        values.append(rec.record_id)
    return [values]


def export_csv(snapshot: StoreSnapshot, kind: str) -> str:
    """RFC 4180 text for one table; absent values are empty fields."""
    if kind not in COLUMNS:
        raise StoreError(f"unknown table {kind!r}")
    rows = {
        SCAN_RESULTS: snapshot.scan_results,
        ASSIGNER_RESULTS: snapshot.assigner_results,
        IMAGE_PACKAGES: snapshot.image_packages,
    }[kind]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(COLUMNS[kind])
    for rec in rows:
        writer.writerows(_row_values(kind, rec))
    return buf.getvalue()


def _opt(value: str):
    return value if value != "" else None


def _opt_ts(value: str):
    return parse_timestamp(value) if value else None


def rows_from_csv(kind: str, text: str) -> list:
    if kind not in COLUMNS:
        raise StoreError(f"unknown table {kind!r}")
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise CsvHeaderError(f"{kind}: empty CSV, header missing") from None
    expected = list(COLUMNS[kind])
    if header != expected:
        missing = [c for c in expected if c not in header]
        extra = [c for c in header if c not in expected]
        raise CsvHeaderError(
            f"{kind}: header mismatch; missing={missing} extra={extra}"
            + ("" if missing or extra else " (column order differs)")
        )
    width = len(expected)
    out = []
    inventories: dict[str, tuple] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != width:
            raise StoreError(f"{kind}: line {lineno} has {len(row)} fields, expected {width}")
        if kind == SCAN_RESULTS:
            (image, tool, cve, pkg, ver, sev, ptype, assigner, mtime, inner, rid) = row
            rec = VulnRecord(
                image, tool, cve, pkg, ver, severity_from_label(sev), PackageType(ptype),
                _opt(assigner), _opt_ts(mtime), _opt_ts(inner),
            )
            if rid and rid != rec.record_id:
                raise StoreError(f"{kind}: line {lineno} record_id does not match row content")
            out.append(rec)
        elif kind == ASSIGNER_RESULTS:
            cve, assigner, sev, raw_label, mtime, vector = row
            out.append(AdvisoryRecord(
                cve, Assigner(assigner), severity_from_label(sev), raw_label,
                _opt_ts(mtime), parse_vector(vector) if vector else None,
            ))
        else:
            image, family, name, version, origin = row
            fam, entries = inventories.get(image, (family, []))
            if name:
                entries.append(PackageEntry(name, version, Origin(origin)))
            inventories[image] = (fam, entries)
    if kind == IMAGE_PACKAGES:
        out = [PackageInventory(img, fam, tuple(ents)) for img, (fam, ents) in inventories.items()]
    return out


def load_snapshot(texts: Mapping[str, str]) -> StoreSnapshot:
    """Build a sealed snapshot from ``{table: csv_text}``."""
    store = VulnStore()
    for kind in TABLES:
        if kind in texts:
            store.import_csv(kind, texts[kind])
    return store.seal()


def table_filename(kind: str) -> str:
    return f"{kind}.csv"


def write_snapshot(snapshot: StoreSnapshot, directory) -> list[Path]:
    """Write the three tables as ``<table>.csv`` under ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for kind in TABLES:
        path = directory / table_filename(kind)
        # newline="" keeps the csv module's \r\n terminators intact
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(export_csv(snapshot, kind))
        paths.append(path)
    return paths


def read_snapshot(directory) -> StoreSnapshot:
    """Load a directory written by :func:`write_snapshot`.

    The scan table is required; the other two are optional.
    """
    directory = Path(directory)
    scan_path = directory / table_filename(SCAN_RESULTS)
    if not scan_path.is_file():
        raise FileNotFoundError(f"no store at {directory} (missing {scan_path.name})")
    texts = {}
    for kind in TABLES:
        path = directory / table_filename(kind)
        if path.is_file():
            with open(path, encoding="utf-8", newline="") as fh:
                texts[kind] = fh.read()
    return load_snapshot(texts)
