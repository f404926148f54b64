"""Operator command line: serve the API, validate files, compute reports,
bulk import/export, drive the sync simulator, and compare flow policies.

stdout carries machine-parseable output only; diagnostics go to stderr.
Exit codes: 0 ok, 1 domain failure (blocking findings, unknown ids),
2 malformed input or config, 3 port already in use.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
from pathlib import Path

from . import errors as E
from .model import (
    MetadataBundle,
    OrgLevel,
    Status,
    bundle_from_dict,
    dump_metadata,
    load_metadata,
)
from .periods import parse_period
from .quality import (
    Severity,
    check_complete,
    check_consistent,
    check_correct,
    cross_element_rules,
    indicator_rules,
)
from .rollup import QueryDim
from .store import (
    ImportMode,
    Store,
    VALUE_HEADER,
    export_values,
    import_values,
    ministry_bridge_export,
)
from .sync import simulate, validate_schedule
from .workflow import POLICIES, PolicyName, Warehouse, flow_comparison

DEFAULT_METADATA = "metadata.json"
DEFAULT_LOG = "facts.log"


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except E.WarehouseError as exc:
        code = 2 if isinstance(exc, (
            E.MalformedFile, E.MalformedMetadata, E.MalformedSchedule,
            E.MalformedPeriodKey, E.MalformedRecord,
        )) else 1
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spmdw")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("validate", help="run 4C checks over a values file")
    p.add_argument("--metadata", required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--k-sigma", type=float, default=3.0)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="indicator coverage table")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--indicator", required=True)
    p.add_argument("--org", required=True)
    p.add_argument("--period", required=True, help="comma-separated period keys")
    p.add_argument("--min-status", default=Status.VERIFIED.value)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simulate-sync", help="run the disconnection simulator")
    p.add_argument("--schedule", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metadata", default=None,
                   help="metadata file (defaults to the bundled fixture)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare-flows", help="latency comparison of flow policies")
    p.add_argument("--fixture", required=True)
    p.set_defaults(func=cmd_compare_flows)

    p = sub.add_parser("import-values", help="bulk-load a values file")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--file", required=True)
    p.add_argument("--mode", choices=[ImportMode.STRICT, ImportMode.SKIP_BAD],
                   default=ImportMode.STRICT)
    p.add_argument("--program", default=None, help="source program for authority checks")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("export-values", help="export values as CSV")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--org", default=None)
    p.add_argument("--from", dest="period_from", default=None)
    p.add_argument("--to", dest="period_to", default=None)
    p.add_argument("--min-status", default=None)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("export-ministry", help="upstream bridge export")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--period", required=True)
    p.add_argument("--part", choices=["records", "manifest"], default="records")
    p.set_defaults(func=cmd_export_ministry)

    p = sub.add_parser("fixture", help="write the seed fixture into a data dir")
    p.add_argument("--out", required=True)
    p.add_argument("--entry-level", type=int, default=int(OrgLevel.SUBDISTRICT))
    p.add_argument("--fill-months", default=None,
                   help="comma-separated month keys to fill with sample data")
    p.add_argument("--fill-datasets", default=None,
                   help="restrict the fill to these dataset ids (comma-separated)")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--upto", default="SUBMITTED",
                   choices=["SUBMITTED", "VERIFIED", "VALIDATED", "PUBLISHED"])
    p.set_defaults(func=cmd_fixture)

    return parser


def open_warehouse(data_dir: str, policy: PolicyName = PolicyName.PHASE2_C,
                   k_sigma: float = 3.0) -> Warehouse:
    base = Path(data_dir)
    metadata_path = base / DEFAULT_METADATA
    if not metadata_path.exists():
        raise E.MalformedMetadata(f"no {DEFAULT_METADATA} in {data_dir}")
    bundle = load_metadata(metadata_path)
    store = Store(base / DEFAULT_LOG)
    return Warehouse(bundle, store, POLICIES[policy], k_sigma=k_sigma)


def cmd_serve(args) -> int:
    try:
        raw = Path(args.config).read_text(encoding="utf-8")
        config = json.loads(raw)
    except FileNotFoundError:
        print(f"error: config file {args.config!r} not found", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(
            f"error: bad config: line {exc.lineno} column {exc.colno}: {exc.msg}",
            file=sys.stderr,
        )
        return 2
    data_dir = config.get("data_dir")
    if not data_dir:
        print("error: config needs data_dir", file=sys.stderr)
        return 2
    host = config.get("host", "127.0.0.1")
    port = int(config.get("port", 8355))
    policy_name = config.get("policy", PolicyName.PHASE2_C.value)
    try:
        policy = PolicyName(policy_name)
    except ValueError:
        print(f"error: unknown policy {policy_name!r}", file=sys.stderr)
        return 2
    if policy is PolicyName.CURRENT_A:
        print("error: the legacy blocking flow is comparison-only and is not served",
              file=sys.stderr)
        return 2
    try:
        warehouse = open_warehouse(
            data_dir, policy, k_sigma=float(config.get("k_sigma", 3.0))
        )
    except E.WarehouseError as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return 2

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        probe.bind((host, port))
    except OSError:
        print(f"error: {host}:{port} is already in use", file=sys.stderr)
        return 3
    finally:
        probe.close()

    from .service import create_app
    import uvicorn

    app = create_app(
        warehouse, session_ttl_seconds=int(config.get("session_ttl_seconds", 3600))
    )
    print(f"listening on {host}:{port}", flush=True)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def cmd_validate(args) -> int:
    bundle = load_metadata(args.metadata)
    try:
        text = Path(args.values).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise E.MalformedFile(f"values file {args.values!r} not found") from None

    findings = collect_file_findings(bundle, text, args.k_sigma)
    for finding in findings:
        print(json.dumps(finding.to_dict(), sort_keys=False))
    blocks = sum(1 for f in findings if f.severity is Severity.BLOCK)
    flags = len(findings) - blocks
    print(f"{len(findings)} findings ({blocks} block, {flags} flag)", file=sys.stderr)
    return 0 if blocks == 0 else 1


def collect_file_findings(bundle: MetadataBundle, text: str, k_sigma: float):
    """Offline 4C audit of a values file: correctness per row, completeness
    per touched form, deviations against in-file history, indicator rules."""
    import csv as _csv
    from io import StringIO

    reader = _csv.reader(StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise E.MalformedFile("empty file: header row is mandatory") from None
    if header != VALUE_HEADER.split(","):
        raise E.MalformedFile(f"bad header: expected {VALUE_HEADER!r}")

    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 9:
            raise E.MalformedFile(f"line {line_no}: expected 9 fields")
        eid, uid, pkey, value_s = row[0], row[1], row[2], row[3]
        bundle.element(eid)
        bundle.tree.get(uid)
        parse_period(pkey)
        try:
            value = int(value_s)
        except ValueError:
            try:
                value = float(value_s)
            except ValueError:
                raise E.MalformedFile(f"line {line_no}: bad value {value_s!r}") from None
        rows.append((eid, uid, pkey, value))

    findings = []
    for eid, uid, pkey, value in rows:
        findings.extend(check_correct(value, bundle.element(eid), uid, pkey))

    by_unit_period: dict[tuple[str, str], dict[str, float]] = {}
    for eid, uid, pkey, value in rows:
        by_unit_period.setdefault((uid, pkey), {})[eid] = value

    rules = indicator_rules(bundle)
    for (uid, pkey), values in sorted(by_unit_period.items()):
        for ds in bundle.datasets.values():
            entered = {eid: v for eid, v in values.items() if eid in ds.element_ids}
            if not entered:
                continue
            _, complete = check_complete(ds, entered, uid, pkey)
            findings.extend(complete)
        findings.extend(cross_element_rules(values, rules, uid, pkey))

    by_series: dict[tuple[str, str], list[tuple[str, float]]] = {}
    for eid, uid, pkey, value in rows:
        by_series.setdefault((eid, uid), []).append((pkey, value))
    from .quality import ElementHistory

    for (eid, uid), points in sorted(by_series.items()):
        points.sort()
        for i in range(1, len(points)):
            history = ElementHistory(eid, uid, tuple(points[:i]))
            dev = check_consistent(points[i][1], bundle.element(eid), history,
                                   k_sigma, points[i][0])
            if dev:
                findings.append(dev)
    return findings


def cmd_report(args) -> int:
    warehouse = open_warehouse(args.data_dir)
    from .rollup import AnalyticsEngine, AnalyticsQuery

    tree = warehouse.bundle.tree
    children = tree.children(args.org)
    members = list(children) if children else [args.org]
    warehouse.bundle.indicator(args.indicator)
    engine = AnalyticsEngine(warehouse.bundle, warehouse.store.snapshot().facts)
    table = engine.analytics(AnalyticsQuery(
        rows=QueryDim.ORG_UNIT,
        columns=QueryDim.PERIOD,
        row_members=members,
        column_members=args.period.split(","),
        filters={QueryDim.INDICATOR: args.indicator},
        min_status=Status(args.min_status),
    ))
    sys.stdout.write(table.to_csv())
    return 0


def cmd_simulate(args) -> int:
    try:
        schedule = json.loads(Path(args.schedule).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise E.MalformedSchedule(f"schedule file {args.schedule!r} not found") from None
    except json.JSONDecodeError as exc:
        raise E.MalformedSchedule(
            f"schedule is not valid JSON: line {exc.lineno} column {exc.colno}"
        ) from None
    validate_schedule(schedule)
    if args.metadata:
        bundle = load_metadata(args.metadata)
    else:
        from .fixtures import build_fixture

        bundle = build_fixture()
    warehouse = Warehouse(bundle, Store())
    metrics = simulate(warehouse, schedule, args.seed)
    print(metrics.to_line())
    return 0


def cmd_compare_flows(args) -> int:
    try:
        doc = json.loads(Path(args.fixture).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise E.MalformedMetadata(f"fixture file {args.fixture!r} not found") from None
    except json.JSONDecodeError as exc:
        raise E.MalformedMetadata(
            f"fixture is not valid JSON: line {exc.lineno} column {exc.colno}"
        ) from None
    print("policy,entry_levels,blocking_hops,review")
    if not doc.get("orgUnits"):
        return 0
    bundle = bundle_from_dict(doc)
    for row in flow_comparison(bundle):
        print(f"{row['policy']},{row['entry_levels']},{row['blocking_hops']},{row['review']}")
    return 0


def cmd_import(args) -> int:
    warehouse = open_warehouse(args.data_dir)
    try:
        text = Path(args.file).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise E.MalformedFile(f"values file {args.file!r} not found") from None
    report = import_values(
        warehouse.store, warehouse.bundle, text,
        mode=args.mode, source_program_id=args.program,
    )
    print(json.dumps(report.to_dict(), sort_keys=False))
    return 0 if not report.rejected else 1


def cmd_export(args) -> int:
    warehouse = open_warehouse(args.data_dir)
    periods = None
    if args.period_from and args.period_to:
        from .periods import month_range

        periods = [p.key for p in month_range(args.period_from, args.period_to)]
    text = export_values(
        warehouse.store.snapshot(), warehouse.bundle,
        args.org, periods, Status(args.min_status) if args.min_status else None,
    )
    sys.stdout.write(text)
    return 0


def cmd_export_ministry(args) -> int:
    warehouse = open_warehouse(args.data_dir)
    records, manifest = ministry_bridge_export(
        warehouse.store.snapshot(), warehouse.bundle, args.period
    )
    sys.stdout.write(records if args.part == "records" else manifest)
    return 0


def cmd_fixture(args) -> int:
    from .fixtures import (
        build_fixture,
        fill_store,
        flaky_network_schedule,
        racing_clients_schedule,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle = build_fixture(entry_level=OrgLevel(args.entry_level))
    dump_metadata(bundle, out / DEFAULT_METADATA)
    (out / "schedule-flaky.json").write_text(
        json.dumps(flaky_network_schedule(bundle), indent=2) + "\n", encoding="utf-8"
    )
    (out / "schedule-racing.json").write_text(
        json.dumps(racing_clients_schedule(bundle), indent=2) + "\n", encoding="utf-8"
    )
    (out / "config.json").write_text(json.dumps({
        "host": "127.0.0.1",
        "port": 8355,
        "data_dir": str(out),
        "policy": "PHASE2_C",
        "k_sigma": 3.0,
        "session_ttl_seconds": 3600,
    }, indent=2) + "\n", encoding="utf-8")
    if args.fill_months:
        warehouse = Warehouse(bundle, Store(out / DEFAULT_LOG))
        fill_store(
            warehouse, args.fill_months.split(","), seed=args.seed,
            upto_status=args.upto,
            datasets=args.fill_datasets.split(",") if args.fill_datasets else None,
        )
    print(f"fixture written to {out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
