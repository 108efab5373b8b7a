"""Command line: ingest, detect, resolve, classify, synth.

Exit codes: 0 success, 1 input or configuration error, 2 residual
inconsistencies above ``--fail-threshold``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from pathlib import Path

from . import __version__
from .detect import DetectError, findings_report, hard_false_positives, level_breakdown, soft_false_positives
from .ingest import (
    load_advisory_feed,
    parse_package_manifest,
    parse_scan_report,
    parse_source_listing,
)
from .model import PackageInventory, PackageType
from .resolve import CREDIBLE_ASSIGNERS, resolve_all
from .store import TABLES, StoreError, VulnStore, read_snapshot, table_filename, write_snapshot

EXIT_OK, EXIT_INPUT, EXIT_THRESHOLD = 0, 1, 2
ENV_DATA_DIR = "LUCID_DATA_DIR"

MANAGER_FAMILY = {"dpkg": PackageType.DEBIAN, "apk": PackageType.ALPINE, "rpm": PackageType.REDHAT}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for the threshold here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _global_options(parser, suppress: bool):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = parser.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=default(None), help="random seed (default 0)")
    g.add_argument("--data-dir", default=default(None),
                   help=f"store directory (default ${ENV_DATA_DIR} or the current directory)")
    g.add_argument("--output-format", choices=("json", "csv"), default=default("json"))
    g.add_argument("--out", default=default(None), help="write the report here instead of stdout")
    g.add_argument("--fail-threshold", type=int, default=default(None),
                   help="exit 2 when more inconsistent CVEs remain after resolve")
    g.add_argument("--credible-assigners", default=default(",".join(CREDIBLE_ASSIGNERS)),
                   help="comma-separated assigners trusted at the assigner level")
    g.add_argument("--jobs", type=int, default=default(1), help="worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scanrecon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    common = _Parser(add_help=False)
    _global_options(common, suppress=True)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("ingest", parents=[common], help="parse reports, manifests and feeds into the store")
    p.add_argument("--report", action="append", default=[], metavar="FORMAT:PATH",
                   help="scan report; FORMAT is Canonical, TrivyLike, ClairLike or SnykLike")
    p.add_argument("--manifest", action="append", default=[], metavar="IMAGE=MANAGER:PATH",
                   help="installed-package listing; MANAGER is dpkg, rpm or apk")
    p.add_argument("--sources", action="append", default=[], metavar="IMAGE=FAMILY:PATH",
                   help="source-installed package listing (name version per line)")
    p.add_argument("--advisory", action="append", default=[], metavar="ASSIGNER:PATH",
                   help="advisory feed from NVD, Redhat or Ubuntu")

    p = sub.add_parser("detect", parents=[common], help="level breakdown and findings")
    p.add_argument("--store", help="read the store from here instead of the data dir")

    p = sub.add_parser("resolve", parents=[common], help="resolve inconsistencies bottom-up")
    p.add_argument("--store", help="read the store from here instead of the data dir")
    p.add_argument("--write-store", help="where to write the rewritten store (default DATA_DIR/resolved)")

    p = sub.add_parser("classify", parents=[common], help="cross-validate a severity classifier")
    p.add_argument("--store", help="read the advisory table from here instead of the data dir")
    p.add_argument("--algorithm", default="DecisionTree",
                   help="DecisionTree, RandomForest, KNearest or GaussianNB")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                   help="override a trainer parameter, e.g. n_estimators=50")
    p.add_argument("--roc-out", help="ROC points CSV (default DATA_DIR/roc_<algorithm>.csv)")
    p.add_argument("--dataset-out", help="also write the feature/label table here")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus and ledger")
    p.add_argument("--config", help="JSON corpus configuration")
    p.add_argument("--images", type=int)
    p.add_argument("--cves", type=int, help="distinct CVEs")
    p.add_argument("--inconsistent", type=int, help="inconsistent CVEs (sets the fraction)")
    p.add_argument("--hard-fp", type=int)
    p.add_argument("--soft-fp", type=int)
    p.add_argument("--tools", help="comma-separated tool names")
    p.add_argument("--score", action="store_true",
                   help="run detect and resolve on the corpus and report the ledger score")
    return parser


# -- helpers -----------------------------------------------------------------

def _data_dir(args) -> Path:
    if args.data_dir:
        return Path(args.data_dir)
    return Path(os.environ.get(ENV_DATA_DIR) or ".")


def _read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _emit(args, text: str):
    data = text.encode("utf-8")
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _as_json(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _load_store(args):
    where = Path(args.store) if getattr(args, "store", None) else _data_dir(args)
    if not where.is_dir():
        raise UsageError(f"data directory {where} does not exist")
    try:
        return read_snapshot(where), where
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None


def _split(item: str, sep: str, what: str, parts: int = 2):
    pieces = item.split(sep, parts - 1)
    if len(pieces) != parts or not all(pieces):
        raise UsageError(f"malformed {what} {item!r}")
    return pieces


def _credible(args) -> list[str]:
    return [a.strip() for a in args.credible_assigners.split(",") if a.strip()]


# -- subcommands -------------------------------------------------------------

def cmd_ingest(args) -> int:
    store = VulnStore()
    counts = []
    # parse everything before writing anything
    for item in args.report:
        fmt, path = _split(item, ":", "--report")
        recs = parse_scan_report(_read_text(path), fmt)
        counts.append(("report", path, store.add_records("scan_results", recs)))
    for item in args.manifest:
        image, rest = _split(item, "=", "--manifest")
        manager, path = _split(rest, ":", "--manifest")
        if manager not in MANAGER_FAMILY:
            raise UsageError(f"unknown package manager {manager!r}")
        entries = parse_package_manifest(_read_text(path), manager)
        store.add_records("image_packages", [PackageInventory(image, MANAGER_FAMILY[manager], tuple(entries))])
        counts.append(("manifest", path, len(entries)))
    for item in args.sources:
        image, rest = _split(item, "=", "--sources")
        family, path = _split(rest, ":", "--sources")
        entries = parse_source_listing(_read_text(path))
        store.add_records("image_packages", [PackageInventory(image, PackageType(family), tuple(entries))])
        counts.append(("sources", path, len(entries)))
    for item in args.advisory:
        assigner, path = _split(item, ":", "--advisory")
        recs = load_advisory_feed(_read_text(path), assigner)
        counts.append(("advisory", path, store.add_records("assigner_results", recs)))
    if not counts:
        raise UsageError("nothing to ingest; give --report, --manifest, --sources or --advisory")
    snapshot = store.seal()

    out_dir = _data_dir(args)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        written = write_snapshot(snapshot, out_dir)
    except OSError as exc:
        for kind in TABLES:
            (out_dir / table_filename(kind)).unlink(missing_ok=True)
        raise UsageError(f"cannot write store to {out_dir}: {exc}") from None

    if args.output_format == "csv":
        _emit(args, _rows_csv(["source", "path", "records"], counts))
    else:
        _emit(args, _as_json({
            "sources": [{"source": s, "path": p, "records": n} for s, p, n in counts],
            "tables": {k: len(t) for k, t in zip(TABLES, (snapshot.scan_results, snapshot.assigner_results,
                                                           snapshot.image_packages))},
            "written": [str(w) for w in written],
        }))
    return EXIT_OK


def cmd_detect(args) -> int:
    snapshot, _ = _load_store(args)
    if not snapshot.images():
        raise UsageError("store holds no images")
    breakdown = level_breakdown(snapshot)
    if args.output_format == "csv":
        _emit(args, breakdown.to_csv())
    else:
        doc = json.loads(findings_report(snapshot, breakdown=breakdown))
        doc["hard_false_positives"] = [snapshot.record(r).record_id for r in hard_false_positives(snapshot)]
        doc["soft_false_positives"] = [snapshot.record(r).record_id for r in soft_false_positives(snapshot)]
        _emit(args, _as_json(doc))
    return EXIT_OK


def cmd_resolve(args) -> int:
    snapshot, where = _load_store(args)
    if not snapshot.images():
        raise UsageError("store holds no images")
    outcome = resolve_all(snapshot, credible_assigners=_credible(args))
    target = Path(args.write_store) if args.write_store else where / "resolved"
    write_snapshot(outcome.store, target)
    with open(target / "resolution.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(outcome.resolution_csv())
    if args.output_format == "csv":
        _emit(args, outcome.summary_csv())
    else:
        doc = outcome.to_dict()
        doc["rewritten_store"] = str(target)
        _emit(args, _as_json(doc))
    residual = len(outcome.residual_inconsistent)
    print(f"resolved {len(outcome.resolved)} of {outcome.l1_total} inconsistent CVEs; "
          f"{residual} remain", file=sys.stderr)
    if args.fail_threshold is not None and residual > args.fail_threshold:
        return EXIT_THRESHOLD
    return EXIT_OK


_INT_PARAMS = {"max_depth", "max_features", "n_estimators", "forest_max_depth", "k", "minkowski_p"}


def _trainer_params(args):
    from .classify.models import Algorithm, TrainerParams

    try:
        algo = Algorithm(args.algorithm)
    except ValueError:
        raise UsageError(f"unknown algorithm {args.algorithm!r}; choose from "
                         + ", ".join(a.value for a in Algorithm)) from None
    overrides = {}
    for item in args.param:
        name, value = _split(item, "=", "--param")
        if name not in TrainerParams.__dataclass_fields__ or name in ("algorithm", "n_jobs"):
            raise UsageError(f"unknown parameter {name!r}")
        if value.lower() == "none":
            overrides[name] = None
        elif name in _INT_PARAMS:
            overrides[name] = int(value)
        elif name == "variance_smoothing":
            overrides[name] = float(value)
        else:
            overrides[name] = int(value) if value.isdigit() else value
    return TrainerParams(algo, n_jobs=args.jobs, **overrides)


def cmd_classify(args) -> int:
    from .classify import assemble_dataset, cross_validate

    params = _trainer_params(args)
    snapshot, where = _load_store(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ds = assemble_dataset(snapshot.assigner_results)
    report = cross_validate(params, ds, k=args.folds, seed=args.seed or 0, n_jobs=args.jobs)
    roc_path = Path(args.roc_out) if args.roc_out else where / f"roc_{params.algorithm.value}.csv"
    with open(roc_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(report.roc_csv())
    if args.dataset_out:
        with open(args.dataset_out, "w", encoding="utf-8", newline="") as fh:
            fh.write(ds.to_csv())
    _emit(args, report.metrics_csv() if args.output_format == "csv" else report.to_json())
    return EXIT_OK


def _corpus_config(args):
    from .synth import CorpusConfig

    base = CorpusConfig.from_json(_read_text(args.config)).to_mapping() if args.config else {}
    if args.images is not None:
        base["image_count"] = args.images
    if args.cves is not None:
        base["distinct_cves"] = args.cves
    if args.tools:
        base["tool_names"] = [t.strip() for t in args.tools.split(",") if t.strip()]
    if args.hard_fp is not None:
        base["hard_fp_count"] = args.hard_fp
    if args.soft_fp is not None:
        base["soft_fp_count"] = args.soft_fp
    if args.seed is not None:
        base["seed"] = args.seed
    config = CorpusConfig.from_mapping(base)
    if args.inconsistent is not None:
        total = config.cve_total
        if not 0 <= args.inconsistent <= total:
            raise UsageError(f"--inconsistent must lie in [0, {total}]")
        base["inconsistent_fraction"] = args.inconsistent / total if total else 0.0
        config = CorpusConfig.from_mapping(base)
    return config


def cmd_synth(args) -> int:
    from .synth import evaluate_pipeline, generate_corpus

    corpus = generate_corpus(_corpus_config(args))
    out_dir = _data_dir(args)
    corpus.write(out_dir)
    summary = corpus.summary()
    if args.score:
        snap = corpus.snapshot
        breakdown = level_breakdown(snap)
        outcome = resolve_all(snap, credible_assigners=_credible(args))
        summary["detected"] = breakdown.to_dict()
        summary["resolution"] = outcome.to_dict()["summary"]
        summary["per_image_average_after"] = outcome.to_dict()["per_image_average_after"]
        summary["score"] = evaluate_pipeline(corpus, breakdown, outcome).to_dict()
    if args.output_format == "csv":
        rows = [("images", summary["images"]), ("distinct_cves", summary["distinct_cves"]),
                ("inconsistent_cves", summary["inconsistent_cves"]),
                ("scan_records", summary["scan_records"]), ("advisories", summary["advisories"])]
        for lv, info in summary["levels"].items():
            rows.append((f"{lv}_percent", f"{info['percent']:.2f}"))
        for lv, n in summary["solvable"].items():
            rows.append((f"{lv}_solvable", n))
        rows += [("hard_false_positives", summary["hard_false_positives"]),
                 ("soft_false_positives", summary["soft_false_positives"])]
        _emit(args, _rows_csv(["key", "value"], rows))
    else:
        _emit(args, _as_json(summary))
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "detect": cmd_detect,
    "resolve": cmd_resolve,
    "classify": cmd_classify,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        if args.command == "classify" and "algorithm" in str(exc):
            parser.print_usage(sys.stderr)
        print(f"scanrecon: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, OSError, DetectError, StoreError) as exc:
        # parse errors, bad CSV headers, infeasible configs, unreadable files
        print(f"scanrecon: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
