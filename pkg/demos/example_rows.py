"""Walk the bundled example rows through detection and resolution."""
from scanrecon.detect import DETAIL_LEVELS, LEVEL_NAMES, all_findings, level_breakdown, soft_false_positives
from scanrecon.fixtures import sample_snapshot
from scanrecon.resolve import resolve_all


def main():
    snap = sample_snapshot()
    print(f"{len(snap.scan_results)} scan rows over {len(snap.images())} images\n")

    findings = all_findings(snap)
    for level in DETAIL_LEVELS:
        print(f"{level.value}  {LEVEL_NAMES[level]}")
        for f in findings[level]:
            sevs = ", ".join(sorted({snap.record(r).severity.label for r in f.evidence}))
            print(f"    {f.cve_identifier:<16} {sevs:<22} {f.note}")
    print()

    for lv, name, count, pct in level_breakdown(snap, findings).rows():
        print(f"{lv}  {count:>3}  {pct:>6}%  {name}")

    soft = [snap.record(r) for r in soft_false_positives(snap)]
    print("\nsoft false positives:", ", ".join(f"{r.package_name} {r.package_version}" for r in soft))

    out = resolve_all(snap)
    print(f"\nremoved {len(out.removed_false_positives)} rows before resolving")
    for cve, r in sorted(out.resolved.items()):
        print(f"    {cve:<16} -> {r.severity.label:<8} at {r.level.value} by {r.method.value}")
    print("unresolved:", ", ".join(sorted(out.residual_inconsistent)) or "none")


if __name__ == "__main__":
    main()
