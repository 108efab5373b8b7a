"""Normalized records shared by every stage of the pipeline."""
from __future__ import annotations

import enum
import hashlib
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import TYPE_CHECKING, Optional, Union

if TYPE_CHECKING:
    from .cvss import CvssVector

CVE_PATTERN = re.compile(r"^CVE-\d{4}-\d{4,}$")


class Severity(enum.IntEnum):
    NONE = 0
    LOW = 1
    MEDIUM = 2
    HIGH = 3
    CRITICAL = 4

    @property
    def label(self) -> str:
        return self.name.capitalize()


class Unapproved(enum.Enum):
    """Marker for findings whose severity is not a rating at all."""

    UNAPPROVED = "Unapproved"

    @property
    def label(self) -> str:
        return self.value


UNAPPROVED = Unapproved.UNAPPROVED

SeverityLike = Union[Severity, Unapproved]


def severity_label(sev: SeverityLike) -> str:
    return sev.label


def severity_from_label(label: str) -> SeverityLike:
    """Inverse of :func:`severity_label` (canonical spellings only)."""
    if label == UNAPPROVED.value:
        return UNAPPROVED
    try:
        return Severity[label.upper()]
    except KeyError:
        raise ValueError(f"not a canonical severity label: {label!r}") from None


class PackageType(str, enum.Enum):
    DEBIAN = "Debian"
    ALPINE = "Alpine"
    REDHAT = "Redhat"
    UNKNOWN = "Unknown"


class Assigner(str, enum.Enum):
    NVD = "NVD"
    REDHAT = "Redhat"
    UBUNTU = "Ubuntu"


class Origin(str, enum.Enum):
    PACKAGE_MANAGER = "PackageManager"
    SOURCE_INSTALL = "SourceInstall"


_ASSIGNER_ALIASES = {
    "nvd": Assigner.NVD,
    "redhat": Assigner.REDHAT,
    "red hat": Assigner.REDHAT,
    "red-hat": Assigner.REDHAT,
    "rhel": Assigner.REDHAT,
    "ubuntu": Assigner.UBUNTU,
}


def canonical_assigner(name: Optional[str]) -> Optional[str]:
    """Fold spelling variants of the three advisory sources; pass others through."""
    if name is None:
        return None
    name = name.strip()
    if not name:
        return None
    known = _ASSIGNER_ALIASES.get(name.lower())
    return known.value if known else name


def is_clair_tool(tool_name: str) -> bool:
    return "clair" in tool_name.lower()


# -- timestamps -------------------------------------------------------------

_TS_PATTERN = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,6}))?Z$"
)


class TimestampError(ValueError):
    pass


def parse_timestamp(raw: str) -> datetime:
    """Parse an RFC3339 ``...Z`` timestamp into an aware UTC datetime."""
    m = _TS_PATTERN.match(raw.strip()) if isinstance(raw, str) else None
    if m is None:
        raise TimestampError(f"not an RFC3339 UTC timestamp: {raw!r}")
    year, month, day, hour, minute, second, frac = m.groups()
    micro = int((frac or "0").ljust(6, "0"))
    try:
        return datetime(
            int(year), int(month), int(day), int(hour), int(minute), int(second),
            micro, tzinfo=timezone.utc,
        )
    except ValueError as exc:
        raise TimestampError(f"invalid timestamp {raw!r}: {exc}") from None


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _fmt_opt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, datetime):
        return format_timestamp(value)
    if isinstance(value, enum.Enum):
        return value.label if isinstance(value, (Severity, Unapproved)) else value.value
    return str(value)


# -- records ----------------------------------------------------------------

@dataclass(frozen=True)
class VulnRecord:
    """One scanner finding: a CVE reported against a package in an image."""

    image_name: str
    tool_name: str
    cve_identifier: str
    package_name: str
    package_version: str
    severity: SeverityLike
    package_type: PackageType = PackageType.UNKNOWN
    assigner: Optional[str] = None
    modification_time: Optional[datetime] = None
    inner_modification_time: Optional[datetime] = None
    record_id: str = field(default="", compare=False)

    def __post_init__(self):
        if not CVE_PATTERN.match(self.cve_identifier):
            raise ValueError(f"bad CVE identifier {self.cve_identifier!r}")
        if not isinstance(self.severity, (Severity, Unapproved)):
            raise TypeError(f"severity must be Severity or UNAPPROVED, got {self.severity!r}")
        if not isinstance(self.package_type, PackageType):
            object.__setattr__(self, "package_type", PackageType(self.package_type))
        if self.assigner is not None and not self.assigner:
            object.__setattr__(self, "assigner", None)
        if is_clair_tool(self.tool_name) and (
            self.assigner is not None or self.modification_time is not None
        ):
            raise ValueError("Clair-style records carry no assigner or modification time")
        object.__setattr__(self, "record_id", self.content_id())

    def content_values(self) -> tuple[str, ...]:
        return tuple(_fmt_opt(getattr(self, name)) for name in SCAN_FIELDS[:-1])

    def content_id(self) -> str:
        digest = hashlib.sha1("\x1f".join(self.content_values()).encode("utf-8"))
        return digest.hexdigest()[:16]

    @property
    def timestamp(self) -> Optional[datetime]:
        """Timestamp used for recency: per-assigner time when present."""
        if self.inner_modification_time is not None:
            return self.inner_modification_time
        return self.modification_time


SCAN_FIELDS = (
    "image_name", "tool_name", "cve_identifier", "package_name", "package_version",
    "severity", "package_type", "assigner", "modification_time",
    "inner_modification_time", "record_id",
)


@dataclass(frozen=True)
class AdvisoryRecord:
    cve_identifier: str
    cve_assigner: Assigner
    severity: SeverityLike
    raw_severity_label: str
    modification_time: Optional[datetime] = None
    cvss: Optional["CvssVector"] = None

    def __post_init__(self):
        if not CVE_PATTERN.match(self.cve_identifier):
            raise ValueError(f"bad CVE identifier {self.cve_identifier!r}")
        if not isinstance(self.cve_assigner, Assigner):
            object.__setattr__(self, "cve_assigner", Assigner(self.cve_assigner))

    # the matching surface shared with VulnRecord
    @property
    def assigner(self) -> str:
        return self.cve_assigner.value

    @property
    def timestamp(self) -> Optional[datetime]:
        return self.modification_time

    def content_values(self) -> tuple[str, ...]:
        return (
            self.cve_identifier,
            self.cve_assigner.value,
            _fmt_opt(self.severity),
            self.raw_severity_label,
            _fmt_opt(self.modification_time),
            self.cvss.render() if self.cvss is not None else "",
        )


ADVISORY_FIELDS = (
    "cve_identifier", "cve_assigner", "severity", "raw_severity_label",
    "modification_time", "cvss",
)


@dataclass(frozen=True, order=True)
class PackageEntry:
    name: str
    version: str
    origin: Origin = Origin.PACKAGE_MANAGER

    def __post_init__(self):
        if not self.name:
            raise ValueError("package name must be nonempty")
        object.__setattr__(self, "name", self.name.lower())
        if not isinstance(self.origin, Origin):
            object.__setattr__(self, "origin", Origin(self.origin))
        if self.origin is Origin.PACKAGE_MANAGER and not self.version:
            raise ValueError(f"package {self.name!r} has no version")


@dataclass(frozen=True)
class PackageInventory:
    image_name: str
    os_family: PackageType
    entries: tuple[PackageEntry, ...] = ()

    def __post_init__(self):
        if not isinstance(self.os_family, PackageType):
            object.__setattr__(self, "os_family", PackageType(self.os_family))
        # drop repeated (name, version) pairs, keep a stable order
        seen = {}
        for e in self.entries:
            seen.setdefault((e.name, e.version), e)
        object.__setattr__(self, "entries", tuple(sorted(seen.values())))

    def names(self) -> set[str]:
        return {e.name for e in self.entries}

    def versions_of(self, name: str) -> set[str]:
        return {e.version for e in self.entries if e.name == name}


IMAGE_PACKAGE_FIELDS = ("image_name", "os_family", "name", "version", "origin")
