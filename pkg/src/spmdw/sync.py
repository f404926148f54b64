"""Offline-first synchronization: client queues, idempotent replay,
conflict tickets, and a deterministic in-process disconnection simulator.

Every pushed record ends as APPLIED, DUPLICATE, or CONFLICT — never dropped.
Deduplication keys on (client_id, client_seq); stale writes are fenced on the
form revision the client last saw and go to a human-resolved ticket.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from typing import Iterable

from .errors import (
    AlreadyResolved,
    CursorAhead,
    LocalQualityBlock,
    MalformedRecord,
    MalformedSchedule,
    RoleDenied,
    UnknownTicket,
    WarehouseError,
)
from .model import DataValue, MetadataBundle, Role, Status
from .periods import parse_period
from .quality import Severity, check_complete, check_correct
from .store import (
    ChangeEvent,
    ConflictTicket,
    FormRecord,
    Resolution,
    Transition,
    op_change,
    op_form,
    op_sync_seen,
    op_ticket,
    op_transition,
    op_value,
)
from .workflow import ReviewAction, Warehouse

EPOCH = datetime(2021, 1, 1, tzinfo=timezone.utc)


def logical_time(minutes: int) -> datetime:
    """Simulator clock: logical minutes mapped onto a fixed epoch."""
    return EPOCH + timedelta(minutes=minutes)


@dataclass(frozen=True)
class ChangeRecord:
    client_id: str
    client_seq: int
    payload: dict
    base_version: int  # form revision the client last saw (0 if none)

    def to_dict(self) -> dict:
        return {
            "client_id": self.client_id,
            "client_seq": self.client_seq,
            "payload": self.payload,
            "base_version": self.base_version,
        }


class AckKind:
    APPLIED = "APPLIED"
    DUPLICATE = "DUPLICATE"
    CONFLICT = "CONFLICT"


@dataclass(frozen=True)
class Ack:
    client_id: str
    client_seq: int
    result: str
    ticket_id: str | None = None

    def to_dict(self) -> dict:
        return {
            "client_id": self.client_id,
            "client_seq": self.client_seq,
            "result": self.result,
            "ticket_id": self.ticket_id,
        }


# -- wire format ---------------------------------------------------------------

def encode_records(records: Iterable[ChangeRecord]) -> bytes:
    """Length-delimited structured-text framing: byte length, newline, body,
    newline, repeated."""
    out = bytearray()
    for rec in records:
        body = json.dumps(rec.to_dict(), separators=(",", ":"), sort_keys=True).encode("utf-8")
        out += str(len(body)).encode("ascii") + b"\n" + body + b"\n"
    return bytes(out)


def decode_records(data: bytes) -> list[ChangeRecord]:
    records = []
    pos = 0
    while pos < len(data):
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise MalformedRecord("truncated length prefix")
        try:
            length = int(data[pos:nl])
        except ValueError:
            raise MalformedRecord(f"bad length prefix {data[pos:nl]!r}") from None
        start = nl + 1
        end = start + length
        body = data[start:end]
        if len(body) != length or data[end:end + 1] != b"\n":
            raise MalformedRecord("record framing broken")
        try:
            doc = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedRecord(f"record body is not valid JSON: {exc}") from exc
        records.append(record_from_dict(doc))
        pos = end + 1
    return records


def record_from_dict(doc: dict) -> ChangeRecord:
    try:
        payload = doc["payload"]
        if not isinstance(payload, dict) or "kind" not in payload:
            raise MalformedRecord("payload must be an object with a kind")
        return ChangeRecord(
            client_id=str(doc["client_id"]),
            client_seq=int(doc["client_seq"]),
            payload=payload,
            base_version=int(doc["base_version"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(f"bad change record: {exc}") from exc


def _payload_subject(payload: dict) -> tuple[str, str, str]:
    try:
        return (payload["dataset_id"], payload["org_unit_id"], payload["period"])
    except KeyError as exc:
        raise MalformedRecord(f"payload missing {exc}") from exc


# -- client --------------------------------------------------------------------

class SyncClient:
    """Offline-capable client: local pre-validated queue plus a replica of
    pulled server state."""

    def __init__(self, client_id: str, bundle: MetadataBundle, user_id: str):
        self.client_id = client_id
        self.bundle = bundle
        self.user_id = user_id
        self.queue: list[ChangeRecord] = []
        self.next_seq = 1
        self.cursor = 0
        # subject -> {"revision", "status", "values"}
        self.replica: dict[tuple[str, str, str], dict] = {}

    def base_version_for(self, subject: tuple[str, str, str]) -> int:
        state = self.replica.get(subject)
        base = state["revision"] if state else 0
        # queued-but-unpushed writes extend the client's own view
        for rec in self.queue:
            if _payload_subject(rec.payload) == subject:
                base += 1
        return base

    def enqueue_submit(
        self,
        dataset_id: str,
        org_unit_id: str,
        period_key: str,
        values: dict,
        submitted_at: datetime,
    ) -> ChangeRecord:
        """Queue a form submission after local 4C pre-validation."""
        dataset = self.bundle.dataset(dataset_id)
        parse_period(period_key)
        findings = []
        numbers = {
            eid: (entry.get("value") if isinstance(entry, dict) else entry)
            for eid, entry in values.items()
        }
        for eid, value in sorted(numbers.items()):
            findings.extend(check_correct(value, self.bundle.element(eid), org_unit_id, period_key))
        _, complete = check_complete(dataset, numbers, org_unit_id, period_key)
        findings.extend(complete)
        blocks = [f for f in findings if f.severity is Severity.BLOCK]
        if blocks:
            raise LocalQualityBlock(
                f"{len(blocks)} blocking finding(s); not queued", findings=findings
            )
        payload = {
            "kind": "submit",
            "dataset_id": dataset_id,
            "org_unit_id": org_unit_id,
            "period": period_key,
            "values": values,
            "actor": self.user_id,
            "submitted_at": submitted_at.isoformat(),
        }
        return self._enqueue(payload, (dataset_id, org_unit_id, period_key))

    def enqueue_review(
        self,
        subject: tuple[str, str, str],
        action: str,
        at: datetime,
        reason: str | None = None,
        justifications: dict | None = None,
    ) -> ChangeRecord:
        payload = {
            "kind": "review",
            "dataset_id": subject[0],
            "org_unit_id": subject[1],
            "period": subject[2],
            "action": ReviewAction(action).value,
            "actor": self.user_id,
            "at": at.isoformat(),
            "reason": reason,
            "justifications": justifications or {},
        }
        return self._enqueue(payload, subject)

    def _enqueue(self, payload: dict, subject: tuple[str, str, str]) -> ChangeRecord:
        base = self.base_version_for(subject)
        record = ChangeRecord(self.client_id, self.next_seq, payload, base)
        self.queue.append(record)
        self.next_seq += 1
        return record

    def apply_pull(self, changes: list[ChangeEvent], cursor: int) -> None:
        for event in changes:
            subject = (event.dataset_id, event.org_unit_id, event.period_key)
            self.replica[subject] = {
                "revision": event.revision,
                "status": event.status.value,
                "values": event.values,
            }
        self.cursor = max(self.cursor, cursor)


# -- server --------------------------------------------------------------------

class SyncServer:
    """Server side of the protocol, layered over a Warehouse."""

    def __init__(self, warehouse: Warehouse):
        self.warehouse = warehouse
        self.apply_counts: dict[tuple[str, int], int] = {}
        self._ticket_counter = 0

    @property
    def store(self):
        return self.warehouse.store

    def push(self, records: list[ChangeRecord]) -> list[Ack]:
        """Apply records exactly once each; re-sends answer DUPLICATE, stale
        writes answer CONFLICT with a pending ticket."""
        acks = []
        last_in_batch: dict[str, int] = {}
        for record in records:
            if record.client_seq < 1:
                raise MalformedRecord("client_seq must be >= 1")
            prev = last_in_batch.get(record.client_id)
            if prev is not None and record.client_seq <= prev:
                raise MalformedRecord("records must be ordered by client_seq")
            last_in_batch[record.client_id] = record.client_seq
            acks.append(self._push_one(record))
        return acks

    def _push_one(self, record: ChangeRecord) -> Ack:
        store = self.store
        with store.lock:
            key = (record.client_id, record.client_seq)
            if key in store.sync_seen:
                return Ack(record.client_id, record.client_seq, AckKind.DUPLICATE)
            last = store.client_last_seq.get(record.client_id, 0)
            if record.client_seq > last + 1:
                raise MalformedRecord(
                    f"gap in client_seq: got {record.client_seq}, last was {last}"
                )
            subject = _payload_subject(record.payload)
            form = store.get_form(*subject)
            revision = form.revision if form else 0
            if record.base_version > revision:
                raise MalformedRecord(
                    f"base_version {record.base_version} ahead of server revision {revision}"
                )
            if record.base_version < revision:
                return self._conflict(record, subject, revision)
            seen_op = op_sync_seen(record.client_id, record.client_seq, AckKind.APPLIED)
            self.apply_counts[key] = self.apply_counts.get(key, 0) + 1
            try:
                self._apply_payload(record.payload, extra_ops=[seen_op])
            except MalformedRecord:
                self.apply_counts[key] -= 1
                raise
            except WarehouseError:
                # could not apply cleanly even at the expected revision;
                # preserve the payload for human resolution rather than drop it
                self.apply_counts[key] -= 1
                return self._conflict(record, subject, revision)
            return Ack(record.client_id, record.client_seq, AckKind.APPLIED)

    def _apply_payload(self, payload: dict, extra_ops: list[dict]) -> None:
        kind = payload.get("kind")
        if kind == "submit":
            self.warehouse.submit_form(
                payload["dataset_id"],
                payload["org_unit_id"],
                payload["period"],
                payload["values"],
                payload["actor"],
                submitted_at=datetime.fromisoformat(payload["submitted_at"]),
                extra_ops=extra_ops,
            )
        elif kind == "review":
            self.warehouse.review(
                _payload_subject(payload),
                payload["action"],
                payload["actor"],
                reason=payload.get("reason"),
                justifications=payload.get("justifications") or {},
                at=datetime.fromisoformat(payload["at"]),
                extra_ops=extra_ops,
            )
        else:
            raise MalformedRecord(f"unknown payload kind {kind!r}")

    def _conflict(self, record: ChangeRecord, subject, revision: int) -> Ack:
        store = self.store
        self._ticket_counter += 1
        ticket_id = f"tk-{self._ticket_counter:04d}"
        form = store.get_form(*subject)
        server_values = {}
        if form:
            for eid in form.element_ids:
                rec = store.get_value(eid, subject[1], subject[2])
                if rec:
                    server_values[eid] = {"value": rec.value, "version": rec.version,
                                          "status": rec.status.value}
        ticket = ConflictTicket(
            id=ticket_id,
            dataset_id=subject[0],
            org_unit_id=subject[1],
            period_key=subject[2],
            client_id=record.client_id,
            client_seq=record.client_seq,
            client_payload=record.payload,
            client_base_version=record.base_version,
            server_revision=revision,
            server_values=server_values,
            resolution=Resolution.PENDING,
            created_at=_payload_time(record.payload),
        )
        store.commit([
            op_ticket(ticket),
            op_sync_seen(record.client_id, record.client_seq, AckKind.CONFLICT),
        ])
        return Ack(record.client_id, record.client_seq, AckKind.CONFLICT, ticket_id)

    def pull(self, cursor: int) -> tuple[list[ChangeEvent], int]:
        store = self.store
        with store.lock:
            head = store.server_seq
            if cursor > head:
                raise CursorAhead(f"cursor {cursor} ahead of server head {head}")
            if cursor < 0:
                raise MalformedRecord("cursor must be >= 0")
            return list(store.change_log[cursor:]), head

    def resolve_conflict(self, ticket_id: str, resolution: str, actor_id: str,
                         at: datetime | None = None) -> Transition:
        """Close a PENDING ticket: CLIENT_WINS re-applies the client payload
        as a fresh versioned write, SERVER_WINS discards it."""
        if resolution not in (Resolution.CLIENT_WINS, Resolution.SERVER_WINS):
            raise MalformedRecord(f"bad resolution {resolution!r}")
        warehouse = self.warehouse
        actor = warehouse.bundle.user(actor_id)
        if actor.role.rank < Role.SUBOFFICE_MANAGER.rank:
            raise RoleDenied("conflict resolution requires a manager role")
        store = self.store
        at = at or datetime.now(timezone.utc).replace(microsecond=0)
        with store.lock:
            ticket = store.tickets.get(ticket_id)
            if ticket is None:
                raise UnknownTicket(f"no ticket {ticket_id!r}")
            if ticket.resolution != Resolution.PENDING:
                raise AlreadyResolved(f"ticket {ticket_id} is {ticket.resolution}")
            closed = replace(
                ticket, resolution=resolution, resolved_by=actor_id, resolved_at=at
            )
            subject = (ticket.dataset_id, ticket.org_unit_id, ticket.period_key)
            if resolution == Resolution.SERVER_WINS:
                form = store.get_form(*subject)
                status = form.status if form else Status.DRAFT
                transition = Transition(
                    dataset_id=subject[0], org_unit_id=subject[1], period_key=subject[2],
                    from_status=status, to_status=status,
                    action="CONFLICT_DISCARD", actor=actor_id, at=at,
                    reason=f"ticket {ticket_id}: server value kept",
                )
                store.commit([op_ticket(closed), op_transition(transition)])
                return transition
            return self._force_apply(closed, actor_id, at)

    def _force_apply(self, ticket: ConflictTicket, actor_id: str, at: datetime) -> Transition:
        store = self.store
        payload = ticket.client_payload
        subject = (ticket.dataset_id, ticket.org_unit_id, ticket.period_key)
        if payload.get("kind") == "review":
            transition = self.warehouse.review(
                subject,
                payload["action"],
                payload["actor"],
                reason=payload.get("reason"),
                justifications=payload.get("justifications") or {},
                at=at,
                extra_ops=[op_ticket(ticket)],
            )
            return transition
        # submit payload: fresh versioned write over whatever the server has
        warehouse = self.warehouse
        dataset = warehouse.bundle.dataset(ticket.dataset_id)
        form = store.get_form(*subject)
        prior_status = form.status if form else Status.DRAFT
        submitted_at = datetime.fromisoformat(payload["submitted_at"])
        ops: list[dict] = [op_ticket(ticket)]
        change_values: dict[str, dict] = {}
        for eid in dataset.element_ids:
            entry = payload["values"].get(eid)
            if entry is None:
                continue
            value = entry.get("value") if isinstance(entry, dict) else entry
            justification = entry.get("justification") if isinstance(entry, dict) else None
            prior = store.get_value(eid, ticket.org_unit_id, ticket.period_key)
            version = (prior.version + 1) if prior else 1
            rec = DataValue(
                element_id=eid,
                org_unit_id=ticket.org_unit_id,
                period_key=ticket.period_key,
                value=value,
                status=Status.SUBMITTED,
                version=version,
                entered_by=payload["actor"],
                updated_at=submitted_at,
                justification=justification,
            )
            ops.append(op_value(rec))
            change_values[eid] = {
                "value": value, "version": version,
                "status": Status.SUBMITTED.value,
                "justification": justification, "deviation_flagged": False,
            }
        revision = (form.revision + 1) if form else 1
        ops.append(op_form(FormRecord(
            dataset_id=ticket.dataset_id,
            org_unit_id=ticket.org_unit_id,
            period_key=ticket.period_key,
            status=Status.SUBMITTED,
            revision=revision,
            submitted_at=submitted_at,
            element_ids=dataset.element_ids,
            entered_by=payload["actor"],
        )))
        transition = Transition(
            dataset_id=ticket.dataset_id,
            org_unit_id=ticket.org_unit_id,
            period_key=ticket.period_key,
            from_status=prior_status,
            to_status=Status.SUBMITTED,
            action="CONFLICT_APPLY",
            actor=actor_id,
            at=at,
            reason=f"ticket {ticket.id}: client value applied",
        )
        ops.append(op_transition(transition))
        ops.append(op_change("submit", *subject, revision, Status.SUBMITTED, change_values))
        store.commit(ops)
        return transition


def _payload_time(payload: dict) -> datetime:
    ts = payload.get("submitted_at") or payload.get("at")
    return datetime.fromisoformat(ts) if ts else EPOCH


# -- simulator -------------------------------------------------------------------

@dataclass
class SimMetrics:
    lost_records: int = 0
    duplicate_applies: int = 0
    conflicts: int = 0
    convergence_round: int = 0
    local_blocks: int = 0

    def to_line(self) -> str:
        return (
            f"lost={self.lost_records} duplicates={self.duplicate_applies} "
            f"conflicts={self.conflicts} converged_round={self.convergence_round}"
        )

    def to_dict(self) -> dict:
        return {
            "lost_records": self.lost_records,
            "duplicate_applies": self.duplicate_applies,
            "conflicts": self.conflicts,
            "convergence_round": self.convergence_round,
        }


_CLIENT_ACTIONS = {"submit", "review", "connect", "disconnect", "flush"}


def validate_schedule(schedule: dict) -> None:
    if not isinstance(schedule, dict):
        raise MalformedSchedule("schedule must be an object")
    clients = schedule.get("clients")
    if not isinstance(clients, list) or not clients:
        raise MalformedSchedule("schedule needs a non-empty clients list")
    ids = set()
    for c in clients:
        if not isinstance(c, dict) or "id" not in c or "user" not in c:
            raise MalformedSchedule("each client needs id and user")
        if c["id"] in ids:
            raise MalformedSchedule(f"duplicate client id {c['id']!r}")
        ids.add(c["id"])
    events = schedule.get("events")
    if not isinstance(events, list):
        raise MalformedSchedule("schedule needs an events list")
    for i, ev in enumerate(events):
        if not isinstance(ev, dict):
            raise MalformedSchedule(f"event {i} must be an object")
        if not isinstance(ev.get("t"), int):
            raise MalformedSchedule(f"event {i} needs an integer t")
        if ev.get("client") not in ids:
            raise MalformedSchedule(f"event {i} references unknown client")
        if ev.get("action") not in _CLIENT_ACTIONS:
            raise MalformedSchedule(f"event {i} has unknown action {ev.get('action')!r}")
        if ev["action"] == "submit":
            for field_name in ("dataset", "org_unit", "period", "values"):
                if field_name not in ev:
                    raise MalformedSchedule(f"submit event {i} missing {field_name!r}")
        if ev["action"] == "review" and "verb" not in ev:
            raise MalformedSchedule(f"review event {i} missing verb")
    drop = schedule.get("drop_rate", 0.0)
    if not isinstance(drop, (int, float)) or not 0 <= drop < 1:
        raise MalformedSchedule("drop_rate must be in [0, 1)")


class Simulator:
    """Deterministic connectivity simulator over an in-process server.

    Acks can be 'dropped' after the server has processed a push, forcing the
    client to retry the same batch — the idempotency path under test.
    """

    MAX_ROUNDS = 10_000

    def __init__(self, warehouse: Warehouse, schedule: dict, seed: int):
        validate_schedule(schedule)
        self.warehouse = warehouse
        self.schedule = schedule
        self.rng = random.Random(seed)
        self.server = SyncServer(warehouse)
        self.drop_rate = float(schedule.get("drop_rate", 0.0))
        self.clients: dict[str, SyncClient] = {}
        self.connected: dict[str, bool] = {}
        self.acked: dict[str, set[int]] = {}
        self.enqueued: dict[str, int] = {}
        self.metrics = SimMetrics()
        for c in schedule["clients"]:
            cid = c["id"]
            self.clients[cid] = SyncClient(cid, warehouse.bundle, c["user"])
            self.connected[cid] = c.get("connected", True)
            self.acked[cid] = set()
            self.enqueued[cid] = 0

    def run(self) -> SimMetrics:
        events = sorted(
            enumerate(self.schedule["events"]), key=lambda pair: (pair[1]["t"], pair[0])
        )
        for _, ev in events:
            self._handle(ev)
        self._converge()
        self._finalize_metrics()
        return self.metrics

    def _handle(self, ev: dict) -> None:
        cid = ev["client"]
        client = self.clients[cid]
        action = ev["action"]
        if action == "connect":
            self.connected[cid] = True
        elif action == "disconnect":
            self.connected[cid] = False
            return
        elif action == "submit":
            try:
                client.enqueue_submit(
                    ev["dataset"], ev["org_unit"], ev["period"], ev["values"],
                    submitted_at=logical_time(ev["t"]),
                )
                self.enqueued[cid] += 1
            except LocalQualityBlock:
                self.metrics.local_blocks += 1
        elif action == "review":
            client.enqueue_review(
                (ev["dataset"], ev["org_unit"], ev["period"]),
                ev["verb"],
                at=logical_time(ev["t"]),
                reason=ev.get("reason"),
                justifications=ev.get("justifications"),
            )
            self.enqueued[cid] += 1
        if self.connected[cid]:
            self._flush(cid)

    def _flush(self, cid: str) -> None:
        """One sync round for a client; counted when it moves any data."""
        client = self.clients[cid]
        did_work = bool(client.queue) or client.cursor < self.server.store.server_seq
        if did_work:
            self.metrics.convergence_round += 1
        if client.queue:
            acks = self.server.push(list(client.queue))
            if self.rng.random() < self.drop_rate:
                return  # ack lost in transit; client will retry the batch
            for ack in acks:
                self.acked[cid].add(ack.client_seq)
            client.queue.clear()
        changes, head = self.server.pull(client.cursor)
        client.apply_pull(changes, head)

    def _converge(self) -> None:
        safety = 0
        while True:
            pending = [cid for cid, c in self.clients.items() if c.queue]
            stale = [
                cid for cid, c in self.clients.items()
                if c.cursor < self.server.store.server_seq
            ]
            if not pending and not stale:
                break
            safety += 1
            if safety > self.MAX_ROUNDS:
                raise RuntimeError("simulation failed to converge")
            for cid in sorted(self.clients):
                self.connected[cid] = True
                self._flush(cid)

    def _finalize_metrics(self) -> None:
        lost = 0
        for cid, client in self.clients.items():
            expected = set(range(1, client.next_seq))
            lost += len(expected - self.acked[cid])
        self.metrics.lost_records = lost
        self.metrics.duplicate_applies = sum(
            1 for n in self.server.apply_counts.values() if n > 1
        )
        self.metrics.conflicts = len(self.server.store.tickets)


def simulate(warehouse: Warehouse, schedule: dict, seed: int) -> SimMetrics:
    """Run one seeded schedule; lost and duplicate counts must be zero for
    every well-formed schedule."""
    return Simulator(warehouse, schedule, seed).run()


def replay_connected(warehouse: Warehouse, schedule: dict) -> None:
    """Oracle: apply the schedule's logical operations in event order on an
    always-connected warehouse (no queues, no retries, no drops)."""
    validate_schedule(schedule)
    users = {c["id"]: c["user"] for c in schedule["clients"]}
    events = sorted(
        enumerate(schedule["events"]), key=lambda pair: (pair[1]["t"], pair[0])
    )
    for _, ev in events:
        if ev["action"] == "submit":
            warehouse.submit_form(
                ev["dataset"], ev["org_unit"], ev["period"], ev["values"],
                users[ev["client"]], submitted_at=logical_time(ev["t"]),
            )
        elif ev["action"] == "review":
            warehouse.review(
                (ev["dataset"], ev["org_unit"], ev["period"]),
                ev["verb"], users[ev["client"]],
                reason=ev.get("reason"),
                justifications=ev.get("justifications"),
                at=logical_time(ev["t"]),
            )
