"""Bundled example data: the sixteen inconsistency examples as scan reports."""
from __future__ import annotations

from importlib import resources

from .ingest import load_advisory_feed, parse_package_manifest, parse_scan_report
from .model import PackageInventory, PackageType
from .store import StoreSnapshot, VulnStore

_MANIFESTS = (
    # image, os family, manager, file
    ("nginx", PackageType.DEBIAN, "dpkg", "nginx.dpkg.txt"),
    ("alpine", PackageType.ALPINE, "apk", "alpine.apk.txt"),
    ("centos", PackageType.REDHAT, "rpm", "centos.rpm.txt"),
)
_FEEDS = (("NVD", "advisories.nvd.json"), ("Ubuntu", "advisories.ubuntu.json"),
          ("Redhat", "advisories.redhat.json"))


def samples_path(name: str = ""):
    root = resources.files("scanrecon") / "data" / "samples"
    return root / name if name else root


def _read(name: str) -> str:
    return samples_path(name).read_text(encoding="utf-8")


def sample_records():
    """``(scan_records, advisories, inventories)`` for the bundled example set."""
    scan = parse_scan_report(_read("reports.json"), "Canonical")
    advisories = []
    for assigner, fname in _FEEDS:
        advisories.extend(load_advisory_feed(_read(fname), assigner))
    inventories = [
        PackageInventory(image, family, tuple(parse_package_manifest(_read(fname), manager)))
        for image, family, manager, fname in _MANIFESTS
    ]
    return scan, advisories, inventories


def sample_snapshot() -> StoreSnapshot:
    scan, advisories, inventories = sample_records()
    return VulnStore.from_records(scan, advisories, inventories)
