"""Network-facing service: token sessions, scoped endpoints, stable error
codes. Anonymous callers only ever see PUBLISHED indicator-level data.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Callable

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse

from . import errors as E
from .model import Role, Status, User, bundle_to_dict
from .periods import month_range, parse_period
from .quality import quality_scorecard
from .rollup import AnalyticsEngine, AnalyticsQuery, QueryDim
from .store import export_values, ministry_bridge_export
from .sync import SyncServer, decode_records
from .workflow import PolicyName, Warehouse

ERROR_STATUS: dict[str, int] = {
    "BAD_CREDENTIALS": 401,
    "TOKEN_MISSING": 401,
    "TOKEN_EXPIRED": 401,
    "SCOPE_DENIED": 403,
    "ROLE_DENIED": 403,
    "UNKNOWN_UNIT": 404,
    "UNKNOWN_ELEMENT": 404,
    "UNKNOWN_DATASET": 404,
    "UNKNOWN_INDICATOR": 404,
    "UNKNOWN_PROGRAM": 404,
    "UNKNOWN_USER": 404,
    "UNKNOWN_TICKET": 404,
    "WRONG_LEVEL": 409,
    "ILLEGAL_TRANSITION": 409,
    "CURSOR_AHEAD": 409,
    "ALREADY_RESOLVED": 409,
    "STALE_VERSION": 409,
    "BLOCKED_BY_QUALITY": 422,
    "UNJUSTIFIED_DEVIATION": 422,
    "ZERO_DENOMINATOR": 422,
    "MISSING_NUMERATOR": 422,
    "MISSING_DENOMINATOR": 422,
    "FOREIGN_ELEMENT": 422,
    "INVALID_QUERY": 400,
    "MISSING_REASON": 400,
    "MALFORMED_RECORD": 400,
    "MALFORMED_PERIOD": 400,
    "PERIOD_TYPE_MISMATCH": 400,
    "MALFORMED_FILE": 400,
    "MALFORMED_METADATA": 400,
    "MALFORMED_SCHEDULE": 400,
    "MALFORMED_REQUEST": 400,
    "LOCAL_QUALITY_BLOCK": 422,
    "DUPLICATE_ID": 400,
    "IMPORT_ABORTED": 422,
}


def error_body(code: str, message: str, details=None) -> dict:
    return {
        "code": code,
        "http_status": ERROR_STATUS.get(code, 500),
        "message": message,
        "details": details or {},
    }


@dataclass
class Session:
    token: str
    user_id: str
    issued_at: datetime
    expires_at: datetime


class SessionTable:
    """In-memory token table with TTL expiry and timing-safe login."""

    def __init__(self, warehouse: Warehouse, ttl_seconds: int = 3600,
                 clock: Callable[[], datetime] | None = None):
        self.warehouse = warehouse
        self.ttl_seconds = ttl_seconds
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self.sessions: dict[str, Session] = {}
        self._dummy_hash = hashlib.sha256(b"timing-pad").hexdigest()

    def authenticate(self, user_id: str, password: str) -> Session:
        supplied = hashlib.sha256(str(password).encode("utf-8")).hexdigest()
        user = self.warehouse.bundle.users.get(user_id)
        stored = user.password_sha256 if user and user.password_sha256 else self._dummy_hash
        ok = hmac.compare_digest(supplied, stored)
        if user is None or user.password_sha256 is None or not ok:
            raise E.BadCredentials("invalid user or password")
        now = self.clock()
        session = Session(
            token=secrets.token_hex(16),
            user_id=user_id,
            issued_at=now,
            expires_at=now + timedelta(seconds=self.ttl_seconds),
        )
        self.sessions[session.token] = session
        return session

    def verify(self, authorization: str | None) -> User:
        if not authorization or not authorization.startswith("Bearer "):
            raise E.TokenMissing("missing bearer token")
        token = authorization.removeprefix("Bearer ").strip()
        session = self.sessions.get(token)
        if session is None:
            raise E.TokenExpired("unknown or expired token")
        if self.clock() >= session.expires_at:
            del self.sessions[token]
            raise E.TokenExpired("token has expired")
        return self.warehouse.bundle.user(session.user_id)


def create_app(
    warehouse: Warehouse,
    session_ttl_seconds: int = 3600,
    clock: Callable[[], datetime] | None = None,
) -> FastAPI:
    if warehouse.policy.name is PolicyName.CURRENT_A:
        raise ValueError("the legacy blocking flow is not served; "
                         "use PHASE1_B or PHASE2_C")
    app = FastAPI(title="spmdw", docs_url=None, redoc_url=None)
    sessions = SessionTable(warehouse, session_ttl_seconds, clock)
    sync_server = SyncServer(warehouse)
    app.state.warehouse = warehouse
    app.state.sessions = sessions
    app.state.sync_server = sync_server

    @app.exception_handler(E.WarehouseError)
    async def _domain_error(_req: Request, exc: E.WarehouseError):
        details = dict(exc.details)
        if isinstance(exc, (E.BlockedByQuality, E.LocalQualityBlock)):
            details["findings"] = [f.to_dict() for f in exc.findings]
        return JSONResponse(
            status_code=ERROR_STATUS.get(exc.code, 500),
            content=error_body(exc.code, exc.message, details),
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content=error_body("MALFORMED_REQUEST", "request body or parameters invalid"),
        )

    def _user(request: Request) -> User:
        return sessions.verify(request.headers.get("authorization"))

    def _maybe_user(request: Request) -> User | None:
        if "authorization" not in request.headers:
            return None
        return _user(request)

    async def _json_body(request: Request) -> dict:
        import json as _json

        try:
            body = _json.loads(await request.body() or b"null")
        except (UnicodeDecodeError, _json.JSONDecodeError):
            raise E.MalformedRequest("request body is not valid JSON") from None
        if not isinstance(body, dict):
            raise E.MalformedRequest("request body must be a JSON object")
        return body

    def _scope(user: User) -> set[str]:
        return warehouse.scope_units(user)

    def _require_unit_in_scope(user: User, unit_id: str) -> None:
        warehouse.bundle.tree.get(unit_id)
        if unit_id not in _scope(user):
            raise E.ScopeDenied("organization unit outside caller scope")

    # -- auth -------------------------------------------------------------

    @app.post("/auth")
    async def auth(request: Request):
        body = await _json_body(request)
        user_id = str(body.get("user", ""))
        password = str(body.get("password", ""))
        session = sessions.authenticate(user_id, password)
        user = warehouse.bundle.user(session.user_id)
        return {
            "token": session.token,
            "user_id": session.user_id,
            "role": user.role.value,
            "expires_at": session.expires_at.isoformat(),
        }

    # -- metadata ---------------------------------------------------------

    @app.get("/metadata")
    async def metadata(request: Request):
        user = _user(request)
        return scoped_metadata(warehouse, user)

    # -- data entry -------------------------------------------------------

    @app.post("/datavaluesets", status_code=201)
    async def datavaluesets(request: Request):
        user = _user(request)
        body = await _json_body(request)
        submitted_at = body.get("submitted_at")
        result = warehouse.submit_form(
            str(body.get("dataset", "")),
            str(body.get("org_unit", "")),
            str(body.get("period", "")),
            body.get("values") or {},
            user.id,
            submitted_at=datetime.fromisoformat(submitted_at) if submitted_at else None,
        )
        return result.to_dict()

    # -- review -----------------------------------------------------------

    @app.post("/reviews")
    async def reviews(request: Request):
        user = _user(request)
        body = await _json_body(request)
        subject = (
            str(body.get("dataset", "")),
            str(body.get("org_unit", "")),
            str(body.get("period", "")),
        )
        transition = warehouse.review(
            subject,
            str(body.get("action", "")),
            user.id,
            reason=body.get("reason"),
            justifications=body.get("justifications") or {},
        )
        return {"transition": transition.to_dict()}

    # -- analytics ----------------------------------------------------------

    @app.get("/analytics")
    async def analytics(request: Request):
        user = _maybe_user(request)
        params = request.query_params
        table = run_analytics_query(warehouse, user, dict(params))
        if params.get("format") == "csv":
            return PlainTextResponse(table.to_csv(), media_type="text/csv")
        return table.to_dict()

    # -- quality ------------------------------------------------------------

    @app.get("/quality/scorecard")
    async def scorecard(request: Request):
        user = _user(request)
        params = request.query_params
        dataset = warehouse.bundle.dataset(params.get("dataset", ""))
        root = params.get("org") or warehouse.bundle.tree.root_id
        _require_unit_in_scope(user, root)
        period = parse_period(params.get("period", ""))
        rows = quality_scorecard(
            warehouse.store, warehouse.bundle, dataset, root, period
        )
        rows = [r for r in rows if r.org_unit_id in _scope(user)]
        return {"dataset": dataset.id, "period": period.key,
                "rows": [r.to_dict() for r in rows]}

    # -- sync ---------------------------------------------------------------

    @app.post("/sync/push")
    async def sync_push(request: Request):
        user = _user(request)
        records = decode_records(await request.body())
        if user.role is not Role.ADMIN:
            for record in records:
                if record.payload.get("actor") != user.id:
                    raise E.ScopeDenied(
                        "pushed records must act as the authenticated user"
                    )
        acks = sync_server.push(records)
        return {"acks": [a.to_dict() for a in acks]}

    @app.get("/sync/pull")
    async def sync_pull(request: Request):
        user = _user(request)
        try:
            cursor = int(request.query_params.get("cursor", "0"))
        except ValueError:
            raise E.MalformedRecord("cursor must be an integer") from None
        changes, head = sync_server.pull(cursor)
        scope = _scope(user)
        visible = [c.to_dict() for c in changes if c.org_unit_id in scope]
        return {"changes": visible, "cursor": head}

    @app.get("/sync/tickets")
    async def sync_tickets(request: Request):
        user = _user(request)
        scope = _scope(user)
        tickets = sorted(
            (t.to_dict() for t in warehouse.store.tickets.values()
             if t.org_unit_id in scope),
            key=lambda t: t["id"],
        )
        return {"tickets": tickets}

    @app.post("/sync/resolve")
    async def sync_resolve(request: Request):
        user = _user(request)
        body = await _json_body(request)
        ticket_id = str(body.get("ticket_id", ""))
        ticket = warehouse.store.tickets.get(ticket_id)
        if ticket is not None and ticket.org_unit_id not in _scope(user):
            raise E.ScopeDenied("ticket outside caller scope")
        transition = sync_server.resolve_conflict(
            ticket_id, str(body.get("resolution", "")), user.id
        )
        return {"transition": transition.to_dict()}

    # -- exports ------------------------------------------------------------

    @app.get("/export/values")
    async def export_values_endpoint(request: Request):
        user = _user(request)
        params = request.query_params
        root = params.get("org") or warehouse.bundle.tree.root_id
        _require_unit_in_scope(user, root)
        periods = None
        if params.get("from") and params.get("to"):
            periods = [p.key for p in month_range(params["from"], params["to"])]
        min_status = None
        if params.get("min_status"):
            min_status = _parse_status(params["min_status"], Status.DRAFT)
        csv_text = export_values(
            warehouse.store.snapshot(), warehouse.bundle, root, periods, min_status
        )
        return PlainTextResponse(csv_text, media_type="text/csv")

    @app.get("/export/ministry")
    async def export_ministry(request: Request):
        user = _user(request)
        if user.role not in (Role.DEPARTMENT_MANAGER, Role.ADMIN):
            raise E.RoleDenied("ministry export requires the department manager")
        params = request.query_params
        period = parse_period(params.get("period", ""))
        records, manifest = ministry_bridge_export(
            warehouse.store.snapshot(), warehouse.bundle, period
        )
        part = params.get("part", "records")
        if part not in ("records", "manifest"):
            raise E.InvalidQuery(f"unknown part {part!r}")
        return PlainTextResponse(
            records if part == "records" else manifest, media_type="text/csv"
        )

    return app


def _parse_status(raw: str | None, default: Status) -> Status:
    if not raw:
        return default
    try:
        return Status(raw)
    except ValueError:
        raise E.InvalidQuery(f"unknown status {raw!r}") from None


def run_analytics_query(
    warehouse: Warehouse,
    user: User | None,
    params: dict[str, str],
) -> object:
    """Shared by the service endpoint and the CLI report command so both
    produce byte-identical tables for the same query."""
    try:
        rows = QueryDim(params.get("rows", ""))
        columns = QueryDim(params.get("columns", ""))
    except ValueError:
        raise E.InvalidQuery("rows and columns must be analytics dimensions") from None
    filters: dict[QueryDim, str] = {}
    for dim, key in ((QueryDim.ORG_UNIT, "org_unit"), (QueryDim.PERIOD, "period"),
                     (QueryDim.ELEMENT, "element"), (QueryDim.INDICATOR, "indicator")):
        if params.get(key):
            filters[dim] = params[key]
    requested_status = _parse_status(params.get("min_status"), Status.VERIFIED)

    floor_forced = False
    if user is None:
        if requested_status is not Status.PUBLISHED:
            requested_status = Status.PUBLISHED
            floor_forced = True
        if rows is QueryDim.ELEMENT or columns is QueryDim.ELEMENT \
                or QueryDim.ELEMENT in filters:
            raise E.ScopeDenied("anonymous access is limited to indicator-level data")

    query = AnalyticsQuery(
        rows=rows,
        columns=columns,
        row_members=_split(params.get("row_members")),
        column_members=_split(params.get("column_members")),
        filters=filters,
        min_status=requested_status,
    )
    if user is not None:
        scope = warehouse.scope_units(user)
        for dim, members in ((rows, query.row_members), (columns, query.column_members)):
            if dim is QueryDim.ORG_UNIT:
                for m in members:
                    warehouse.bundle.tree.get(m)
                    if m not in scope:
                        raise E.ScopeDenied("organization unit outside caller scope")
        if QueryDim.ORG_UNIT in filters:
            warehouse.bundle.tree.get(filters[QueryDim.ORG_UNIT])
            if filters[QueryDim.ORG_UNIT] not in scope:
                raise E.ScopeDenied("organization unit outside caller scope")

    engine = AnalyticsEngine(warehouse.bundle, warehouse.store.snapshot().facts)
    table = engine.analytics(query)
    table.floor_forced = floor_forced
    return table


def _split(raw: str | None) -> list[str]:
    return [part for part in (raw or "").split(",") if part]


def scoped_metadata(warehouse: Warehouse, user: User) -> dict:
    """Metadata document filtered to the caller's scope; secrets stripped."""
    bundle = warehouse.bundle
    full = bundle_to_dict(bundle, include_secrets=False)
    if user.role is Role.ADMIN:
        return full
    scope = warehouse.scope_units(user)
    # parent links pointing outside the visible subtree are cut so responses
    # never leak out-of-scope unit ids
    units = [
        {**u, "parent_id": u["parent_id"] if u["parent_id"] in scope else None}
        for u in full["orgUnits"] if u["id"] in scope
    ]
    ds_scope = user.scope_dataset_ids or set(bundle.datasets)
    datasets = [d for d in full["dataSets"] if d["id"] in ds_scope]
    element_ids = {eid for d in datasets for eid in d["element_ids"]}
    elements = [e for e in full["dataElements"] if e["id"] in element_ids]
    program_ids = {e["owner_program_id"] for e in elements}
    program_ids.update(d["program_id"] for d in datasets)
    programs = [p for p in full["programs"] if p["id"] in program_ids]
    indicators = [
        i for i in full["indicators"]
        if i["numerator_element_id"] in element_ids
        and i["denominator_element_id"] in element_ids
    ]
    users = [u for u in full["users"] if u["id"] == user.id]
    return {
        "orgUnits": units,
        "programs": programs,
        "dataElements": elements,
        "dataSets": datasets,
        "indicators": indicators,
        "users": users,
    }
