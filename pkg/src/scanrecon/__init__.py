"""Reconcile vulnerability reports from several container scanners.

Reports are normalized into one record model, loaded into a small in-memory
store, checked for severity inconsistencies at six levels and for package
false positives, then resolved bottom-up. A separate subpackage trains and
evaluates severity classifiers on CVSS base metrics.
"""
from .cvss import CvssVector, ScoredVector, base_score, parse_vector, severity_band
from .detect import (
    Finding,
    LevelBreakdown,
    LevelId,
    hard_false_positives,
    inconsistent_cves,
    level_breakdown,
    level_findings,
    soft_false_positives,
)
from .ingest import (
    load_advisory_feed,
    normalize_severity,
    parse_package_manifest,
    parse_scan_report,
)
from .model import (
    UNAPPROVED,
    AdvisoryRecord,
    PackageEntry,
    PackageInventory,
    PackageType,
    Severity,
    VulnRecord,
    parse_timestamp,
)
from .resolve import (
    ResolutionOutcome,
    recent_filter,
    resolve_all,
    resolve_level,
    source_priority_filter,
    strip_false_positives,
    vote,
)
from .store import MatchKey, StoreSnapshot, VulnStore

__version__ = "0.1.0"
