"""Durable single-node store: append-only commit log plus in-memory state.

A commit is one JSON line (batch of ops) fsynced before it is applied, so an
interrupted write leaves a truncated tail that recovery discards — readers
see either the pre-commit or post-commit state, never a torn one. Snapshots
are plain copies; readers of a snapshot never observe later writes.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime
from io import StringIO
from pathlib import Path
from typing import Iterable

import csv

from .errors import ImportAborted, MalformedFile
from .model import (
    DataValue,
    MetadataBundle,
    OrgLevel,
    Status,
    check_authority,
)
from .periods import Period, parse_period
from .quality import check_correct

VALUE_HEADER = (
    "element_id,org_unit_id,period,value,status,version,"
    "updated_at,entered_by,justification"
)
BRIDGE_HEADER = "period,org_unit_id,indicator_id,spm_category,numerator,denominator,value"
MANIFEST_HEADER = "period,record_count,digest"


@dataclass(frozen=True)
class FormRecord:
    """Workflow state of one form instance (dataset, unit, period)."""

    dataset_id: str
    org_unit_id: str
    period_key: str
    status: Status
    revision: int
    submitted_at: datetime | None
    element_ids: tuple[str, ...]
    entered_by: str | None


@dataclass(frozen=True)
class Transition:
    dataset_id: str
    org_unit_id: str
    period_key: str
    from_status: Status | None
    to_status: Status
    action: str
    actor: str
    at: datetime
    reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "org_unit_id": self.org_unit_id,
            "period": self.period_key,
            "from_status": self.from_status.value if self.from_status else None,
            "to_status": self.to_status.value,
            "action": self.action,
            "actor": self.actor,
            "at": self.at.isoformat(),
            "reason": self.reason,
        }


@dataclass(frozen=True)
class ChangeEvent:
    """One committed change, in server order, as served to sync pulls."""

    server_seq: int
    kind: str
    dataset_id: str
    org_unit_id: str
    period_key: str
    revision: int
    status: Status
    values: dict  # element_id -> {value, version, status, justification, deviation_flagged}

    def to_dict(self) -> dict:
        return {
            "server_seq": self.server_seq,
            "kind": self.kind,
            "dataset_id": self.dataset_id,
            "org_unit_id": self.org_unit_id,
            "period": self.period_key,
            "revision": self.revision,
            "status": self.status.value,
            "values": self.values,
        }


class Resolution:
    PENDING = "PENDING"
    CLIENT_WINS = "CLIENT_WINS"
    SERVER_WINS = "SERVER_WINS"


@dataclass(frozen=True)
class ConflictTicket:
    id: str
    dataset_id: str
    org_unit_id: str
    period_key: str
    client_id: str
    client_seq: int
    client_payload: dict
    client_base_version: int
    server_revision: int
    server_values: dict
    resolution: str = Resolution.PENDING
    created_at: datetime | None = None
    resolved_by: str | None = None
    resolved_at: datetime | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "dataset_id": self.dataset_id,
            "org_unit_id": self.org_unit_id,
            "period": self.period_key,
            "client_id": self.client_id,
            "client_seq": self.client_seq,
            "client_payload": self.client_payload,
            "client_base_version": self.client_base_version,
            "server_revision": self.server_revision,
            "server_values": self.server_values,
            "resolution": self.resolution,
            "created_at": self.created_at.isoformat() if self.created_at else None,
            "resolved_by": self.resolved_by,
            "resolved_at": self.resolved_at.isoformat() if self.resolved_at else None,
        }


@dataclass(frozen=True)
class Snapshot:
    """Immutable view of facts and form states at one commit point."""

    snapshot_id: int
    facts: dict[tuple[str, str, str], DataValue]
    forms: dict[tuple[str, str, str], FormRecord]


# -- op builders (ops carry only JSON primitives) ------------------------------

def op_value(rec: DataValue) -> dict:
    return {
        "op": "value",
        "element_id": rec.element_id,
        "org_unit_id": rec.org_unit_id,
        "period": rec.period_key,
        "value": rec.value,
        "status": rec.status.value,
        "version": rec.version,
        "entered_by": rec.entered_by,
        "updated_at": rec.updated_at.isoformat(),
        "justification": rec.justification,
        "deviation_flagged": rec.deviation_flagged,
    }


def op_form(form: FormRecord) -> dict:
    return {
        "op": "form",
        "dataset_id": form.dataset_id,
        "org_unit_id": form.org_unit_id,
        "period": form.period_key,
        "status": form.status.value,
        "revision": form.revision,
        "submitted_at": form.submitted_at.isoformat() if form.submitted_at else None,
        "element_ids": list(form.element_ids),
        "entered_by": form.entered_by,
    }


def op_transition(t: Transition) -> dict:
    d = t.to_dict()
    d["op"] = "transition"
    return d


def op_sync_seen(client_id: str, client_seq: int, ack: str) -> dict:
    return {"op": "sync_seen", "client_id": client_id, "client_seq": client_seq, "ack": ack}


def op_change(kind: str, dataset_id: str, org_unit_id: str, period_key: str,
              revision: int, status: Status, values: dict) -> dict:
    return {
        "op": "change",
        "kind": kind,
        "dataset_id": dataset_id,
        "org_unit_id": org_unit_id,
        "period": period_key,
        "revision": revision,
        "status": status.value,
        "values": values,
    }


def op_ticket(ticket: ConflictTicket) -> dict:
    d = ticket.to_dict()
    d["op"] = "ticket"
    return d


def _parse_dt(s: str | None) -> datetime | None:
    return datetime.fromisoformat(s) if s else None


class Store:
    """Single-writer fact store. All mutation goes through commit()."""

    def __init__(self, log_path: str | Path | None = None):
        self.log_path = Path(log_path) if log_path else None
        self.lock = threading.RLock()
        self.snapshot_id = 0
        self.facts: dict[tuple[str, str, str], DataValue] = {}
        # (element_id, org_unit_id) -> {period_key: DataValue}; kept in step
        # with facts so history lookups stay O(periods)
        self.series: dict[tuple[str, str], dict[str, DataValue]] = {}
        self.forms: dict[tuple[str, str, str], FormRecord] = {}
        self.transitions: list[Transition] = []
        self.sync_seen: dict[tuple[str, int], str] = {}
        self.client_last_seq: dict[str, int] = {}
        self.change_log: list[ChangeEvent] = []
        self.tickets: dict[str, ConflictTicket] = {}
        if self.log_path and self.log_path.exists():
            self._recover()

    # -- reads ------------------------------------------------------------

    def get_value(self, element_id: str, org_unit_id: str, period_key: str) -> DataValue | None:
        return self.facts.get((element_id, org_unit_id, period_key))

    def get_form(self, dataset_id: str, org_unit_id: str, period_key: str) -> FormRecord | None:
        return self.forms.get((dataset_id, org_unit_id, period_key))

    @property
    def server_seq(self) -> int:
        return len(self.change_log)

    def element_history(self, element_id: str, org_unit_id: str, before: Period):
        """Prior-period (period, value) points at SUBMITTED or better, oldest first."""
        from .quality import ElementHistory

        points = []
        for pkey, rec in self.series.get((element_id, org_unit_id), {}).items():
            if rec.status.rank < Status.SUBMITTED.rank:
                continue
            p = parse_period(pkey)
            if p.period_type is before.period_type and p.sort_key < before.sort_key:
                points.append((p.sort_key, pkey, rec.value))
        points.sort()
        return ElementHistory(
            element_id, org_unit_id, tuple((pk, v) for _, pk, v in points)
        )

    def snapshot(self) -> Snapshot:
        with self.lock:
            return Snapshot(self.snapshot_id, dict(self.facts), dict(self.forms))

    # -- writes -----------------------------------------------------------

    def commit(self, ops: list[dict]) -> int:
        """Apply a batch atomically: log line first (fsync), then memory."""
        with self.lock:
            line = json.dumps(
                {"snapshot": self.snapshot_id + 1, "ops": ops},
                separators=(",", ":"),
            )
            if self.log_path is not None:
                self._write_line(line)
            self._apply_ops(ops)
            self.snapshot_id += 1
            return self.snapshot_id

    def _write_line(self, line: str) -> None:
        with open(self.log_path, "ab") as fh:
            fh.write(line.encode("utf-8") + b"\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _recover(self) -> None:
        with open(self.log_path, "rb") as fh:
            for raw in fh:
                if not raw.endswith(b"\n"):
                    break  # torn tail from an interrupted commit
                try:
                    entry = json.loads(raw.decode("utf-8"))
                except (UnicodeDecodeError, json.JSONDecodeError):
                    break
                self._apply_ops(entry["ops"])
                self.snapshot_id = entry["snapshot"]

    def _apply_ops(self, ops: Iterable[dict]) -> None:
        for op in ops:
            kind = op["op"]
            if kind == "value":
                rec = DataValue(
                    element_id=op["element_id"],
                    org_unit_id=op["org_unit_id"],
                    period_key=op["period"],
                    value=op["value"],
                    status=Status(op["status"]),
                    version=op["version"],
                    entered_by=op["entered_by"],
                    updated_at=_parse_dt(op["updated_at"]),
                    justification=op["justification"],
                    deviation_flagged=op.get("deviation_flagged", False),
                )
                self.facts[(rec.element_id, rec.org_unit_id, rec.period_key)] = rec
                self.series.setdefault(
                    (rec.element_id, rec.org_unit_id), {}
                )[rec.period_key] = rec
            elif kind == "form":
                form = FormRecord(
                    dataset_id=op["dataset_id"],
                    org_unit_id=op["org_unit_id"],
                    period_key=op["period"],
                    status=Status(op["status"]),
                    revision=op["revision"],
                    submitted_at=_parse_dt(op["submitted_at"]),
                    element_ids=tuple(op["element_ids"]),
                    entered_by=op["entered_by"],
                )
                self.forms[(form.dataset_id, form.org_unit_id, form.period_key)] = form
            elif kind == "transition":
                self.transitions.append(Transition(
                    dataset_id=op["dataset_id"],
                    org_unit_id=op["org_unit_id"],
                    period_key=op["period"],
                    from_status=Status(op["from_status"]) if op["from_status"] else None,
                    to_status=Status(op["to_status"]),
                    action=op["action"],
                    actor=op["actor"],
                    at=_parse_dt(op["at"]),
                    reason=op["reason"],
                ))
            elif kind == "sync_seen":
                key = (op["client_id"], op["client_seq"])
                self.sync_seen[key] = op["ack"]
                last = self.client_last_seq.get(op["client_id"], 0)
                if op["client_seq"] > last:
                    self.client_last_seq[op["client_id"]] = op["client_seq"]
            elif kind == "change":
                self.change_log.append(ChangeEvent(
                    server_seq=len(self.change_log) + 1,
                    kind=op["kind"],
                    dataset_id=op["dataset_id"],
                    org_unit_id=op["org_unit_id"],
                    period_key=op["period"],
                    revision=op["revision"],
                    status=Status(op["status"]),
                    values=op["values"],
                ))
            elif kind == "ticket":
                ticket = ConflictTicket(
                    id=op["id"],
                    dataset_id=op["dataset_id"],
                    org_unit_id=op["org_unit_id"],
                    period_key=op["period"],
                    client_id=op["client_id"],
                    client_seq=op["client_seq"],
                    client_payload=op["client_payload"],
                    client_base_version=op["client_base_version"],
                    server_revision=op["server_revision"],
                    server_values=op["server_values"],
                    resolution=op["resolution"],
                    created_at=_parse_dt(op["created_at"]),
                    resolved_by=op["resolved_by"],
                    resolved_at=_parse_dt(op["resolved_at"]),
                )
                self.tickets[ticket.id] = ticket
            else:
                raise ValueError(f"unknown op kind {kind!r}")


# -- bulk value interchange -----------------------------------------------------

@dataclass
class ImportReport:
    applied: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"applied": self.applied,
                "rejected": [{"line": n, "reason": r} for n, r in self.rejected]}


def format_cell(value) -> str:
    if isinstance(value, bool):
        raise ValueError("boolean is not a valid data value")
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _parse_number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)  # may raise ValueError to caller


def export_values(
    snapshot: Snapshot,
    bundle: MetadataBundle,
    root_unit_id: str | None = None,
    periods: Iterable[str] | None = None,
    min_status: Status | None = None,
) -> str:
    """Deterministic CSV of live facts: unit preorder, then period, then element.

    min_status=None exports every live row, REJECTED ones included, so a
    full export is a faithful backup.
    """
    tree = bundle.tree
    root = root_unit_id or tree.root_id
    tree.get(root)
    allowed_units = set(tree.subtree(root))
    period_set = set(periods) if periods is not None else None

    rows = []
    for (eid, uid, pkey), rec in snapshot.facts.items():
        if uid not in allowed_units:
            continue
        if period_set is not None and pkey not in period_set:
            continue
        if min_status is not None and rec.status.rank < min_status.rank:
            continue
        rows.append((tree.preorder_index(uid), parse_period(pkey).sort_key, eid, rec))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))

    buf = StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(VALUE_HEADER.split(","))
    for _, _, _, rec in rows:
        writer.writerow([
            rec.element_id,
            rec.org_unit_id,
            rec.period_key,
            format_cell(rec.value),
            rec.status.value,
            str(rec.version),
            rec.updated_at.isoformat(),
            rec.entered_by,
            rec.justification or "",
        ])
    return buf.getvalue()


class ImportMode:
    STRICT = "STRICT"
    SKIP_BAD = "SKIP_BAD"


def import_values(
    store: Store,
    bundle: MetadataBundle,
    text: str,
    mode: str = ImportMode.STRICT,
    source_program_id: str | None = None,
) -> ImportReport:
    """Bulk-load value rows. STRICT aborts the whole file on the first bad
    row (nothing lands); SKIP_BAD applies good rows and reports bad ones.
    """
    if mode not in (ImportMode.STRICT, ImportMode.SKIP_BAD):
        raise ValueError(f"unknown import mode {mode!r}")
    reader = csv.reader(StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedFile("empty file: header row is mandatory") from None
    if header != VALUE_HEADER.split(","):
        raise MalformedFile(
            f"bad header: expected {VALUE_HEADER!r}, got {','.join(header)!r}"
        )

    source_program = bundle.program(source_program_id) if source_program_id else None

    good: list[DataValue] = []
    report = ImportReport()
    seen_subjects: set[tuple[str, str, str]] = set()

    def reject(line_no: int, reason: str):
        if mode == ImportMode.STRICT:
            raise ImportAborted(
                f"line {line_no}: {reason}", line_no=line_no
            )
        report.rejected.append((line_no, reason))

    with store.lock:
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 9:
                reject(line_no, f"expected 9 fields, got {len(row)}")
                continue
            (eid, uid, pkey, value_s, status_s, version_s,
             updated_s, entered_by, justification) = row
            try:
                parse_period(pkey)
            except Exception:
                reject(line_no, f"bad period key {pkey!r}")
                continue
            if eid not in bundle.elements:
                reject(line_no, f"unknown element {eid!r}")
                continue
            element = bundle.elements[eid]
            if uid not in bundle.tree:
                reject(line_no, f"unknown org unit {uid!r}")
                continue
            entry_levels = bundle.entry_levels_for_element(eid)
            if entry_levels and bundle.tree.get(uid).level not in entry_levels:
                reject(line_no, f"unit {uid!r} is not at the entry level for {eid!r}")
                continue
            if source_program is not None and not check_authority(element, source_program):
                reject(line_no, f"program {source_program.id!r} does not own {eid!r}")
                continue
            try:
                value = _parse_number(value_s)
            except ValueError:
                reject(line_no, f"bad numeric value {value_s!r}")
                continue
            findings = check_correct(value, element, uid, pkey)
            if findings:
                reject(line_no, findings[0].message)
                continue
            try:
                status = Status(status_s)
            except ValueError:
                reject(line_no, f"bad status {status_s!r}")
                continue
            try:
                version = int(version_s)
                if version < 1:
                    raise ValueError
            except ValueError:
                reject(line_no, f"bad version {version_s!r}")
                continue
            try:
                updated_at = datetime.fromisoformat(updated_s)
            except ValueError:
                reject(line_no, f"bad timestamp {updated_s!r}")
                continue
            subject = (eid, uid, pkey)
            if subject in seen_subjects:
                reject(line_no, f"duplicate row for {subject}")
                continue
            existing = store.get_value(*subject)
            if existing is not None and version != existing.version + 1:
                reject(
                    line_no,
                    f"version {version} conflicts with stored version {existing.version}",
                )
                continue
            seen_subjects.add(subject)
            good.append(DataValue(
                element_id=eid,
                org_unit_id=uid,
                period_key=pkey,
                value=value,
                status=status,
                version=version,
                entered_by=entered_by,
                updated_at=updated_at,
                justification=justification or None,
            ))

        if good:
            ops = [op_value(rec) for rec in good]
            ops.extend(_synthesize_form_ops(store, bundle, good))
            store.commit(ops)
        report.applied = len(good)
    return report


def _synthesize_form_ops(store: Store, bundle: MetadataBundle,
                         incoming: list[DataValue]) -> list[dict]:
    """Imported rows carry no submission event; derive form records so review
    and timeliness work over migrated data."""
    staged: dict[tuple[str, str, str], DataValue] = {
        (r.element_id, r.org_unit_id, r.period_key): r for r in incoming
    }

    def value_at(eid, uid, pkey):
        return staged.get((eid, uid, pkey)) or store.get_value(eid, uid, pkey)

    affected: set[tuple[str, str, str]] = set()
    for rec in incoming:
        for ds in bundle.datasets_containing(rec.element_id):
            affected.add((ds.id, rec.org_unit_id, rec.period_key))

    ops = []
    for ds_id, uid, pkey in sorted(affected):
        ds = bundle.datasets[ds_id]
        present = [value_at(eid, uid, pkey) for eid in ds.element_ids]
        present = [r for r in present if r is not None]
        if not present:
            continue
        prior = store.get_form(ds_id, uid, pkey)
        ops.append(op_form(FormRecord(
            dataset_id=ds_id,
            org_unit_id=uid,
            period_key=pkey,
            status=min((r.status for r in present), key=lambda s: s.rank),
            revision=(prior.revision + 1) if prior else 1,
            submitted_at=max(r.updated_at for r in present),
            element_ids=ds.element_ids,
            entered_by=present[0].entered_by,
        )))
    return ops


def ministry_bridge_export(
    snapshot: Snapshot,
    bundle: MetadataBundle,
    period: Period | str,
) -> tuple[str, str]:
    """Flat per-indicator per-admin-city records at VALIDATED or better,
    plus a manifest line with the record count and content digest."""
    from .rollup import AnalyticsEngine

    period = period if isinstance(period, Period) else parse_period(period)
    engine = AnalyticsEngine(bundle, snapshot.facts)
    tree = bundle.tree

    buf = StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BRIDGE_HEADER.split(","))
    count = 0
    for uid in tree.units_at_level(OrgLevel.ADMIN_CITY):
        for ind_id in sorted(bundle.indicators):
            ind = bundle.indicators[ind_id]
            num = engine.aggregate(ind.numerator_element_id, uid, period, Status.VALIDATED)
            den = engine.aggregate(ind.denominator_element_id, uid, period, Status.VALIDATED)
            if num is None or den is None or den.value == 0:
                continue
            value = ind.factor * num.value / den.value
            writer.writerow([
                period.key, uid, ind_id, ind.spm_category,
                format_cell(num.value), format_cell(den.value), repr(float(value)),
            ])
            count += 1
    records = buf.getvalue()
    digest = hashlib.sha256(records.encode("utf-8")).hexdigest()

    mbuf = StringIO()
    mwriter = csv.writer(mbuf, lineterminator="\n")
    mwriter.writerow(MANIFEST_HEADER.split(","))
    mwriter.writerow([period.key, str(count), digest])
    return records, mbuf.getvalue()
