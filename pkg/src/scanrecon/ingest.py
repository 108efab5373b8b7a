"""Turn scanner reports, package listings and advisory feeds into records.

Scanner adapters keep only the fields of the ``scan_results`` table; the rest
of each report is discarded. The Trivy/Clair/Snyk shapes are best-effort
renderings of those tools' JSON output, not full schemas.
"""
from __future__ import annotations

import json
import re
import warnings
from typing import Any, Iterable, Optional

from .cvss import CvssError, parse_vector
from .model import (
    CVE_PATTERN,
    UNAPPROVED,
    AdvisoryRecord,
    Assigner,
    Origin,
    PackageEntry,
    PackageType,
    Severity,
    SeverityLike,
    TimestampError,
    VulnRecord,
    canonical_assigner,
    format_timestamp,
    is_clair_tool,
    parse_timestamp,
)

__all__ = [
    "IngestWarning",
    "ParseError",
    "SEVERITY_VOCABULARIES",
    "normalize_severity",
    "parse_scan_report",
    "dump_scan_report",
    "parse_package_manifest",
    "parse_source_listing",
    "load_advisory_feed",
    "dump_advisory_feed",
    "parse_timestamp",
]


class IngestWarning(UserWarning):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, offset: Optional[int] = None):
        where = f" (line {line}, column {offset})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.offset = offset


class UnknownSeverityError(ValueError):
    pass


_U = UNAPPROVED
SEVERITY_VOCABULARIES: dict[str, dict[str, SeverityLike]] = {
    "nvd": {
        "none": Severity.NONE, "low": Severity.LOW, "medium": Severity.MEDIUM,
        "high": Severity.HIGH, "critical": Severity.CRITICAL,
    },
    "ubuntu": {
        "negligible": _U, "low": Severity.LOW, "medium": Severity.MEDIUM,
        "high": Severity.HIGH, "critical": Severity.CRITICAL,
    },
    # parallel four-step scale
    "redhat": {
        "low": Severity.LOW, "moderate": Severity.MEDIUM,
        "important": Severity.HIGH, "critical": Severity.CRITICAL,
    },
    "trivy": {
        "unknown": _U, "low": Severity.LOW, "medium": Severity.MEDIUM,
        "high": Severity.HIGH, "critical": Severity.CRITICAL,
    },
    "clair": {
        "unknown": _U, "negligible": _U, "low": Severity.LOW,
        "medium": Severity.MEDIUM, "high": Severity.HIGH,
        "critical": Severity.CRITICAL, "defcon1": Severity.CRITICAL,
    },
    "snyk": {
        "low": Severity.LOW, "medium": Severity.MEDIUM,
        "high": Severity.HIGH, "critical": Severity.CRITICAL,
    },
}
for _vocab in SEVERITY_VOCABULARIES.values():
    _vocab["unapproved"] = _U

_ANY_VOCAB: dict[str, SeverityLike] = {}
for _vocab in SEVERITY_VOCABULARIES.values():
    _ANY_VOCAB.update(_vocab)


def _source_key(source: str) -> str:
    key = source.strip().lower().replace(" ", "").replace("-", "")
    if key == "rhel":
        return "redhat"
    for name in SEVERITY_VOCABULARIES:
        if name in key:
            return name
    return key


def normalize_severity(raw_label: str, assigner_or_tool: str) -> SeverityLike:
    """Map a source's severity token onto the canonical five-step scale.

    Lookup is case-insensitive and tries the named source's vocabulary first,
    then any known vocabulary. Tokens that carry no rating map to
    ``UNAPPROVED``.
    """
    if not raw_label or not raw_label.strip():
        raise UnknownSeverityError(f"empty severity label from {assigner_or_tool!r}")
    token = raw_label.strip().lower()
    vocab = SEVERITY_VOCABULARIES.get(_source_key(assigner_or_tool), {})
    if token in vocab:
        return vocab[token]
    if token in _ANY_VOCAB:
        return _ANY_VOCAB[token]
    raise UnknownSeverityError(
        f"unknown severity token {raw_label!r} from source {assigner_or_tool!r}"
    )


def _scan_severity(raw: Any, source: str, where: str) -> SeverityLike:
    try:
        return normalize_severity(str(raw or ""), source)
    except UnknownSeverityError as exc:
        warnings.warn(f"{where}: {exc}; recorded as Unapproved", IngestWarning, stacklevel=3)
        return UNAPPROVED


def _opt_time(raw: Any, where: str):
    if raw is None or raw == "":
        return None
    try:
        return parse_timestamp(str(raw))
    except TimestampError as exc:
        raise ParseError(f"{where}: {exc}") from None


def _opt_text(raw: Any) -> Optional[str]:
    if raw is None:
        return None
    raw = str(raw).strip()
    return raw or None


def _load_json(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc.msg}", exc.lineno, exc.colno) from None


def _require(obj: dict, key: str, where: str) -> Any:
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError(f"{where}: missing field {key!r}")
    return obj[key]


_FAMILY_HINTS = (
    (("debian", "ubuntu", "deb"), PackageType.DEBIAN),
    (("alpine", "apk"), PackageType.ALPINE),
    (("redhat", "rhel", "centos", "fedora", "amzn", "amazon", "oracle", "ol", "rpm", "photon"),
     PackageType.REDHAT),
)


def package_type_from_hint(hint: Optional[str]) -> PackageType:
    """Guess the OS family from a distro name, namespace or package manager."""
    if not hint:
        return PackageType.UNKNOWN
    for member in PackageType:
        if hint == member.value:
            return member
    head = re.split(r"[:\s/_-]", hint.strip().lower())[0]
    for names, family in _FAMILY_HINTS:
        if head in names:
            return family
    return PackageType.UNKNOWN


def _cve_ok(cve: Any, where: str) -> bool:
    if isinstance(cve, str) and CVE_PATTERN.match(cve.strip()):
        return True
    warnings.warn(f"{where}: skipping finding without a CVE identifier ({cve!r})",
                  IngestWarning, stacklevel=3)
    return False


# -- scan report adapters ---------------------------------------------------

def _parse_canonical(doc: dict, idx: int) -> list[VulnRecord]:
    where = f"report[{idx}]"
    image = _require(doc, "image_name", where)
    tool = _require(doc, "tool_name", where)
    ptype = PackageType(doc.get("package_type") or "Unknown")
    findings = _require(doc, "findings", where)
    if not isinstance(findings, list):
        raise ParseError(f"{where}: findings must be an array")
    out = []
    for j, f in enumerate(findings):
        fw = f"{where}.findings[{j}]"
        cve = _require(f, "cve_identifier", fw)
        if not _cve_ok(cve, fw):
            continue
        out.append(VulnRecord(
            image_name=image,
            tool_name=tool,
            cve_identifier=cve.strip(),
            package_name=str(_require(f, "package_name", fw)).lower(),
            package_version=str(_require(f, "package_version", fw)),
            severity=_scan_severity(_require(f, "severity", fw), tool, fw),
            package_type=ptype,
            assigner=canonical_assigner(_opt_text(f.get("assigner"))),
            modification_time=_opt_time(f.get("modification_time"), fw),
            inner_modification_time=_opt_time(f.get("inner_modification_time"), fw),
        ))
    return out


def _parse_trivy(doc: dict, idx: int) -> list[VulnRecord]:
    where = f"report[{idx}]"
    image = _require(doc, "ArtifactName", where)
    family = ((doc.get("Metadata") or {}).get("OS") or {}).get("Family")
    ptype = package_type_from_hint(family)
    out = []
    for r, result in enumerate(doc.get("Results") or []):
        for j, v in enumerate(result.get("Vulnerabilities") or []):
            fw = f"{where}.Results[{r}].Vulnerabilities[{j}]"
            cve = v.get("VulnerabilityID")
            if not _cve_ok(cve, fw):
                continue
            out.append(VulnRecord(
                image_name=image,
                tool_name="trivy",
                cve_identifier=cve.strip(),
                package_name=str(_require(v, "PkgName", fw)).lower(),
                package_version=str(_require(v, "InstalledVersion", fw)),
                severity=_scan_severity(v.get("Severity"), "trivy", fw),
                package_type=ptype,
                assigner=canonical_assigner(_opt_text(v.get("SeveritySource"))),
                modification_time=_opt_time(v.get("LastModifiedDate"), fw),
            ))
    return out


def _parse_clair(doc: dict, idx: int) -> list[VulnRecord]:
    where = f"report[{idx}]"
    image = _require(doc, "image", where)
    unapproved = set(doc.get("unapproved") or [])
    out = []
    for j, v in enumerate(_require(doc, "vulnerabilities", where) or []):
        fw = f"{where}.vulnerabilities[{j}]"
        cve = v.get("vulnerability")
        if not _cve_ok(cve, fw):
            continue
        if v.get("severity"):
            sev = _scan_severity(v["severity"], "clair", fw)
        elif cve in unapproved:
            sev = UNAPPROVED
        else:
            sev = _scan_severity(None, "clair", fw)
        out.append(VulnRecord(
            image_name=image,
            tool_name="clair",
            cve_identifier=cve.strip(),
            package_name=str(_require(v, "featurename", fw)).lower(),
            package_version=str(_require(v, "featureversion", fw)),
            severity=sev,
            package_type=package_type_from_hint(v.get("namespace")),
        ))
    return out


def _parse_snyk(doc: dict, idx: int) -> list[VulnRecord]:
    where = f"report[{idx}]"
    image = doc.get("path") or ((doc.get("docker") or {}).get("image"))
    if not image:
        raise ParseError(f"{where}: missing field 'path'")
    ptype = package_type_from_hint(doc.get("packageManager"))
    out = []
    for j, v in enumerate(_require(doc, "vulnerabilities", where) or []):
        fw = f"{where}.vulnerabilities[{j}]"
        cves = ((v.get("identifiers") or {}).get("CVE")) or []
        cve = cves[0] if cves else None
        if not _cve_ok(cve, fw):
            continue
        sev = _scan_severity(v.get("severity"), "snyk", fw)
        # per-assigner detail: prefer the entry agreeing with the reported severity
        details = v.get("cvssDetails") or []
        chosen = None
        for d in details:
            if str(d.get("severity", "")).lower() == str(v.get("severity", "")).lower():
                chosen = d
                break
        if chosen is None and details:
            chosen = details[0]
        chosen = chosen or {}
        out.append(VulnRecord(
            image_name=image,
            tool_name="snyk",
            cve_identifier=cve.strip(),
            package_name=str(_require(v, "packageName", fw)).lower(),
            package_version=str(_require(v, "version", fw)),
            severity=sev,
            package_type=ptype,
            assigner=canonical_assigner(_opt_text(chosen.get("assigner"))),
            modification_time=_opt_time(v.get("modificationTime"), fw),
            inner_modification_time=_opt_time(chosen.get("modificationTime"), fw),
        ))
    return out


_ADAPTERS = {
    "canonical": _parse_canonical,
    "trivylike": _parse_trivy,
    "clairlike": _parse_clair,
    "snyklike": _parse_snyk,
}


def parse_scan_report(raw: str, format_id: str = "Canonical") -> list[VulnRecord]:
    """Parse one report (or a JSON array of reports) in the named format.

    Each finding yields one record. Findings without a CVE identifier are
    skipped with an :class:`IngestWarning`; unknown severity tokens become
    ``UNAPPROVED`` with a warning.
    """
    adapter = _ADAPTERS.get(format_id.lower().replace("_", "").replace("-", ""))
    if adapter is None:
        raise ValueError(f"unknown report format {format_id!r}")
    data = _load_json(raw)
    docs = data if isinstance(data, list) else [data]
    records: list[VulnRecord] = []
    for idx, doc in enumerate(docs):
        if not isinstance(doc, dict):
            raise ParseError(f"report[{idx}]: expected an object")
        try:
            records.extend(adapter(doc, idx))
        except (TypeError, AttributeError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"report[{idx}]: {exc}") from None
    return records


def dump_scan_report(records: Iterable[VulnRecord]) -> str:
    """Serialize records to the canonical report format.

    Records are grouped by (image, tool, package type) in first-seen order;
    one group renders as an object, several as an array of objects.
    """
    groups: dict[tuple, list[VulnRecord]] = {}
    for rec in records:
        groups.setdefault((rec.image_name, rec.tool_name, rec.package_type), []).append(rec)
    docs = []
    for (image, tool, ptype), recs in groups.items():
        findings = []
        for r in recs:
            f: dict[str, Any] = {
                "cve_identifier": r.cve_identifier,
                "package_name": r.package_name,
                "package_version": r.package_version,
                "severity": r.severity.label,
            }
            if r.assigner is not None:
                f["assigner"] = r.assigner
            if r.modification_time is not None:
                f["modification_time"] = format_timestamp(r.modification_time)
            if r.inner_modification_time is not None:
                f["inner_modification_time"] = format_timestamp(r.inner_modification_time)
            findings.append(f)
        docs.append({
            "image_name": image,
            "tool_name": tool,
            "package_type": ptype.value,
            "findings": findings,
        })
    payload: Any = docs[0] if len(docs) == 1 else docs
    return json.dumps(payload, indent=2, sort_keys=False) + "\n"


# -- package manifests ------------------------------------------------------

_RPM_ARCHES = (
    "x86_64", "noarch", "i686", "i586", "i386", "aarch64", "ppc64le", "ppc64",
    "s390x", "armv7hl", "armhfp", "src",
)


def _split_name_version_release(token: str) -> Optional[tuple[str, str]]:
    # name may contain hyphens; version and release may not
    parts = token.rsplit("-", 2)
    if len(parts) != 3 or not all(parts):
        return None
    name, version, release = parts
    if not version[0].isalnum():
        return None
    return name, f"{version}-{release}"


def _dpkg_line(line: str):
    fields = line.split()
    if len(fields) < 3 or len(fields[0]) not in (2, 3) or not fields[0].isalpha():
        return None
    if fields[0] != "ii":
        return False  # recognised but not installed
    name = fields[1].split(":", 1)[0]
    return PackageEntry(name, fields[2])


def _rpm_line(line: str):
    token = line.split()[0]
    for arch in _RPM_ARCHES:
        if token.endswith("." + arch):
            token = token[: -len(arch) - 1]
            break
    split = _split_name_version_release(token)
    return PackageEntry(*split) if split else None


def _apk_line(line: str):
    token = line.split(" - ", 1)[0].strip()
    if " " in token:
        return None
    split = _split_name_version_release(token)
    return PackageEntry(*split) if split else None


_DPKG_DECORATION = re.compile(r"^(Desired=|\||\+\+\+-|[|+]?/ )")

_MANIFEST_PARSERS = {"dpkg": _dpkg_line, "rpm": _rpm_line, "apk": _apk_line}


def parse_package_manifest(raw: str, manager: str) -> list[PackageEntry]:
    """Parse ``dpkg -l``, ``rpm -qa`` or ``apk info -vv`` output.

    Lines that do not look like package entries are skipped and summarized in
    a single warning; an empty result from nonempty input is an error.
    """
    key = manager.strip().lower()
    line_parser = _MANIFEST_PARSERS.get(key)
    if line_parser is None:
        raise ValueError(f"unknown package manager {manager!r}")
    entries: dict[tuple[str, str], PackageEntry] = {}
    skipped = []
    content_lines = 0
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        content_lines += 1
        if key == "dpkg" and _DPKG_DECORATION.match(line):
            continue
        try:
            entry = line_parser(line)
        except ValueError:
            entry = None
        if entry is False:
            continue
        if entry is None:
            skipped.append(lineno)
            continue
        entries.setdefault((entry.name, entry.version), entry)
    if skipped:
        warnings.warn(
            f"{manager}: skipped {len(skipped)} unrecognized line(s) "
            f"(first at line {skipped[0]})", IngestWarning, stacklevel=2,
        )
    if content_lines and not entries and skipped:
        raise ParseError(f"{manager}: no package entries recognized", skipped[0], 1)
    return list(entries.values())


def parse_source_listing(raw: str) -> list[PackageEntry]:
    """Entries for programs installed from source, e.g. ``ls /usr/local/bin``.

    Each line holds a program name and optionally a version.
    """
    out = {}
    for line in raw.splitlines():
        fields = line.split()
        if not fields:
            continue
        name = fields[0].rsplit("/", 1)[-1]
        version = fields[1] if len(fields) > 1 else ""
        entry = PackageEntry(name, version, Origin.SOURCE_INSTALL)
        out.setdefault((entry.name, entry.version), entry)
    return list(out.values())


# -- advisory feeds ---------------------------------------------------------

def load_advisory_feed(raw: str, assigner: str) -> list[AdvisoryRecord]:
    """Parse the canonical advisory format for one assigner."""
    source = Assigner(canonical_assigner(assigner))
    data = _load_json(raw)
    if not isinstance(data, dict):
        raise ParseError("advisory feed must be an object")
    declared = data.get("assigner")
    if declared and canonical_assigner(declared) != source.value:
        raise ParseError(f"feed declares assigner {declared!r}, expected {source.value}")
    entries = data.get("entries") or []
    if not isinstance(entries, list):
        raise ParseError("entries must be an array")
    out = []
    seen = set()
    for j, e in enumerate(entries):
        where = f"entries[{j}]"
        cve = e.get("cve_identifier") if isinstance(e, dict) else None
        if not isinstance(cve, str) or not CVE_PATTERN.match(cve.strip()):
            warnings.warn(f"{where}: rejected, no valid cve_identifier", IngestWarning, stacklevel=2)
            continue
        label = str(_require(e, "severity", where))
        try:
            sev = normalize_severity(label, source.value)
        except UnknownSeverityError as exc:
            raise ParseError(f"{where}: {exc}") from None
        mtime = _opt_time(e.get("modification_time"), where)
        vector = None
        if e.get("cvss_vector"):
            try:
                vector = parse_vector(e["cvss_vector"])
            except CvssError as exc:
                raise ParseError(f"{where}: {exc}") from None
        key = (cve.strip(), source, mtime)
        if key in seen:
            warnings.warn(f"{where}: duplicate entry for {cve} dropped", IngestWarning, stacklevel=2)
            continue
        seen.add(key)
        out.append(AdvisoryRecord(cve.strip(), source, sev, label, mtime, vector))
    return out


def dump_advisory_feed(records: Iterable[AdvisoryRecord], assigner: str) -> str:
    entries = []
    for r in records:
        e: dict[str, Any] = {"cve_identifier": r.cve_identifier, "severity": r.raw_severity_label}
        if r.modification_time is not None:
            e["modification_time"] = format_timestamp(r.modification_time)
        if r.cvss is not None:
            e["cvss_vector"] = r.cvss.render()
        entries.append(e)
    return json.dumps({"assigner": assigner, "entries": entries}, indent=2) + "\n"
