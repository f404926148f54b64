"""Data lifecycle state machine and the warehouse facade.

Forms move DRAFT -> SUBMITTED -> VERIFIED -> VALIDATED -> PUBLISHED, with
REJECT as the only backward edge. Review never blocks upward data flow under
the phase policies: analytics at min_status=SUBMITTED see a submission the
moment it commits.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Mapping

from .errors import (
    BlockedByQuality,
    IllegalTransition,
    MissingReason,
    PeriodTypeMismatch,
    RoleDenied,
    ScopeDenied,
    UnjustifiedDeviation,
    WrongLevel,
)
from .model import (
    DataValue,
    MetadataBundle,
    OrgLevel,
    Role,
    Status,
    User,
    check_authority,
)
from .periods import Period, parse_period
from .quality import (
    DEFAULT_K_SIGMA,
    Dimension,
    QualityFinding,
    Severity,
    check_complete,
    check_consistent,
    check_correct,
    check_current,
)
from .store import (
    FormRecord,
    Store,
    Transition,
    op_change,
    op_form,
    op_transition,
    op_value,
)


class PolicyName(str, Enum):
    CURRENT_A = "CURRENT_A"
    PHASE1_B = "PHASE1_B"
    PHASE2_C = "PHASE2_C"


@dataclass(frozen=True)
class FlowPolicy:
    """Which level enters data and how review interleaves with data flow."""

    name: PolicyName
    entry_levels: frozenset[OrgLevel]
    verify_roles: tuple[Role, Role]  # (verifier stage, validator stage)
    blocking: bool

    @property
    def verify_role(self) -> Role:
        return self.verify_roles[0]

    @property
    def validate_role(self) -> Role:
        return self.verify_roles[1]


POLICIES: dict[PolicyName, FlowPolicy] = {
    # Legacy gradual flow: entry at the bottom, each level gates the next.
    PolicyName.CURRENT_A: FlowPolicy(
        PolicyName.CURRENT_A,
        frozenset({OrgLevel.SUBDISTRICT}),
        (Role.SUBOFFICE_MANAGER, Role.DEPARTMENT_MANAGER),
        blocking=True,
    ),
    # Phase 1: city suboffices enter directly; review is non-blocking.
    PolicyName.PHASE1_B: FlowPolicy(
        PolicyName.PHASE1_B,
        frozenset({OrgLevel.ADMIN_CITY}),
        (Role.SUBOFFICE_MANAGER, Role.DEPARTMENT_MANAGER),
        blocking=False,
    ),
    # Phase 2: district/subdistrict offices enter; suboffice and department
    # review run concurrently with the data flow.
    PolicyName.PHASE2_C: FlowPolicy(
        PolicyName.PHASE2_C,
        frozenset({OrgLevel.DISTRICT, OrgLevel.SUBDISTRICT}),
        (Role.SUBOFFICE_MANAGER, Role.DEPARTMENT_MANAGER),
        blocking=False,
    ),
}


class ReviewAction(str, Enum):
    VERIFY = "VERIFY"
    VALIDATE = "VALIDATE"
    REJECT = "REJECT"
    PUBLISH = "PUBLISH"


def legal_transitions(status: Status, role: Role, policy: FlowPolicy) -> set[ReviewAction]:
    """Exactly the actions review()/publish() would accept for this status
    and role, ignoring data-dependent gates (justification coverage)."""
    actions: set[ReviewAction] = set()
    if status is Status.SUBMITTED:
        if role in (policy.verify_role, Role.ADMIN):
            actions.add(ReviewAction.VERIFY)
        if role in (policy.verify_role, policy.validate_role, Role.ADMIN):
            actions.add(ReviewAction.REJECT)
    elif status is Status.VERIFIED:
        if role in (policy.validate_role, Role.ADMIN):
            actions.add(ReviewAction.VALIDATE)
            actions.add(ReviewAction.REJECT)
    elif status is Status.VALIDATED:
        if role in (Role.DEPARTMENT_MANAGER, Role.ADMIN):
            actions.add(ReviewAction.PUBLISH)
    return actions


@dataclass
class SubmissionResult:
    dataset_id: str
    org_unit_id: str
    period_key: str
    versions: dict[str, int]
    findings: list[QualityFinding]  # FLAG findings recorded with the submission

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "org_unit_id": self.org_unit_id,
            "period": self.period_key,
            "versions": self.versions,
            "findings": [f.to_dict() for f in self.findings],
        }


Subject = tuple[str, str, str]  # (dataset_id, org_unit_id, period_key)


def _utcnow() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


class Warehouse:
    """Facade tying metadata, quality checks, the store, and the flow policy."""

    def __init__(
        self,
        bundle: MetadataBundle,
        store: Store | None = None,
        policy: FlowPolicy = POLICIES[PolicyName.PHASE2_C],
        k_sigma: float = DEFAULT_K_SIGMA,
    ):
        self.bundle = bundle
        self.store = store if store is not None else Store()
        self.policy = policy
        self.k_sigma = k_sigma

    # Metadata swaps are atomic: one assignment under the writer lock.
    def load_metadata(self, bundle: MetadataBundle) -> None:
        with self.store.lock:
            self.bundle = bundle

    def _actor(self, actor_id: str) -> User:
        return self.bundle.user(actor_id)

    def _unit_in_scope(self, user: User, org_unit_id: str) -> bool:
        if user.role is Role.ADMIN:
            return True
        tree = self.bundle.tree
        if user.role is Role.ENUMERATOR_PIC:
            return org_unit_id in user.scope_org_unit_ids
        return any(tree.is_within(org_unit_id, root) for root in user.scope_org_unit_ids)

    def scope_units(self, user: User) -> set[str]:
        """Every org unit id the user may see."""
        tree = self.bundle.tree
        if user.role is Role.ADMIN:
            return set(tree.preorder)
        if user.role is Role.ENUMERATOR_PIC:
            return set(user.scope_org_unit_ids)
        out: set[str] = set()
        for root in user.scope_org_unit_ids:
            out.update(tree.subtree(root))
        return out

    # -- entry ------------------------------------------------------------

    def submit_form(
        self,
        dataset_id: str,
        org_unit_id: str,
        period: Period | str,
        values: Mapping[str, object],
        actor_id: str,
        submitted_at: datetime | None = None,
        extra_ops: list[dict] | None = None,
    ) -> SubmissionResult:
        """Validate a whole form and store it at SUBMITTED, or store nothing.

        Values may be plain numbers or {"value": n, "justification": text}.
        Zero BLOCK findings are required to land; FLAG findings (lateness,
        deviations) are recorded and returned with the result.
        """
        dataset = self.bundle.dataset(dataset_id)
        unit = self.bundle.tree.get(org_unit_id)
        period = period if isinstance(period, Period) else parse_period(period)
        if period.period_type is not dataset.period_type:
            raise PeriodTypeMismatch(
                f"dataset {dataset_id} expects {dataset.period_type.value} periods"
            )
        actor = self._actor(actor_id)
        if actor.role not in (Role.ENUMERATOR_PIC, Role.ADMIN):
            raise ScopeDenied(f"role {actor.role.value} does not enter data")
        if actor.role is Role.ENUMERATOR_PIC:
            if org_unit_id not in actor.scope_org_unit_ids:
                raise ScopeDenied("organization unit outside the submitter's scope")
            if dataset_id not in actor.scope_dataset_ids:
                raise ScopeDenied("dataset outside the submitter's scope")
        if unit.level is not dataset.entry_level:
            raise WrongLevel(
                f"dataset {dataset_id} is entered at level {int(dataset.entry_level)}, "
                f"unit {org_unit_id} is level {int(unit.level)}"
            )
        if dataset.entry_level not in self.policy.entry_levels:
            raise WrongLevel(
                f"policy {self.policy.name.value} does not accept entry at "
                f"level {int(dataset.entry_level)}"
            )
        submitted_at = submitted_at or _utcnow()

        with self.store.lock:
            form = self.store.get_form(dataset_id, org_unit_id, period.key)
            prior_status = form.status if form else Status.DRAFT
            if prior_status not in (Status.DRAFT, Status.REJECTED, Status.SUBMITTED):
                raise IllegalTransition(
                    f"form is {prior_status.value}; reviewed data can only be "
                    "replaced after an explicit REJECT"
                )

            numbers, justifications = _normalize_values(values)
            findings: list[QualityFinding] = []
            program = self.bundle.program(dataset.program_id)
            for eid in sorted(numbers):
                element = self.bundle.element(eid)
                if not check_authority(element, program):
                    findings.append(QualityFinding(
                        dimension=Dimension.CONSISTENT,
                        severity=Severity.BLOCK,
                        subject=(eid, org_unit_id, period.key),
                        message=(
                            f"single-entry authority: element {eid} is owned by "
                            f"{element.owner_program_id}, not {program.id}"
                        ),
                    ))
                findings.extend(check_correct(numbers[eid], element, org_unit_id, period.key))
            _, complete_findings = check_complete(dataset, numbers, org_unit_id, period.key)
            findings.extend(complete_findings)

            flags: list[QualityFinding] = []
            late = check_current(dataset, period, submitted_at, org_unit_id)
            if late:
                flags.append(late)
            deviations: set[str] = set()
            if not findings:
                for eid in sorted(numbers):
                    history = self.store.element_history(eid, org_unit_id, period)
                    dev = check_consistent(
                        numbers[eid], self.bundle.element(eid), history,
                        self.k_sigma, period.key,
                    )
                    if dev:
                        flags.append(dev)
                        deviations.add(eid)

            blocks = [f for f in findings if f.severity is Severity.BLOCK]
            if blocks:
                raise BlockedByQuality(
                    f"{len(blocks)} blocking finding(s)", findings=findings + flags
                )

            versions: dict[str, int] = {}
            ops: list[dict] = []
            change_values: dict[str, dict] = {}
            for eid in dataset.element_ids:
                prior = self.store.get_value(eid, org_unit_id, period.key)
                version = (prior.version + 1) if prior else 1
                versions[eid] = version
                rec = DataValue(
                    element_id=eid,
                    org_unit_id=org_unit_id,
                    period_key=period.key,
                    value=numbers[eid],
                    status=Status.SUBMITTED,
                    version=version,
                    entered_by=actor_id,
                    updated_at=submitted_at,
                    justification=justifications.get(eid),
                    deviation_flagged=eid in deviations,
                )
                ops.append(op_value(rec))
                change_values[eid] = {
                    "value": rec.value,
                    "version": version,
                    "status": Status.SUBMITTED.value,
                    "justification": rec.justification,
                    "deviation_flagged": rec.deviation_flagged,
                }
            revision = (form.revision + 1) if form else 1
            ops.append(op_form(FormRecord(
                dataset_id=dataset_id,
                org_unit_id=org_unit_id,
                period_key=period.key,
                status=Status.SUBMITTED,
                revision=revision,
                submitted_at=submitted_at,
                element_ids=dataset.element_ids,
                entered_by=actor_id,
            )))
            ops.append(op_transition(Transition(
                dataset_id=dataset_id,
                org_unit_id=org_unit_id,
                period_key=period.key,
                from_status=prior_status,
                to_status=Status.SUBMITTED,
                action="SUBMIT",
                actor=actor_id,
                at=submitted_at,
            )))
            ops.append(op_change(
                "submit", dataset_id, org_unit_id, period.key,
                revision, Status.SUBMITTED, change_values,
            ))
            if extra_ops:
                ops.extend(extra_ops)
            self.store.commit(ops)
            return SubmissionResult(dataset_id, org_unit_id, period.key, versions, flags)

    # -- review -----------------------------------------------------------

    def review(
        self,
        subject: Subject,
        action: ReviewAction | str,
        actor_id: str,
        reason: str | None = None,
        justifications: Mapping[str, str] | None = None,
        at: datetime | None = None,
        extra_ops: list[dict] | None = None,
    ) -> Transition:
        """Apply VERIFY / VALIDATE / REJECT to one form instance atomically."""
        action = ReviewAction(action)
        if action is ReviewAction.PUBLISH:
            return self.publish(subject, actor_id, at=at, extra_ops=extra_ops)
        dataset_id, org_unit_id, period_key = subject
        self.bundle.dataset(dataset_id)
        self.bundle.tree.get(org_unit_id)
        parse_period(period_key)
        actor = self._actor(actor_id)
        at = at or _utcnow()

        with self.store.lock:
            form = self.store.get_form(dataset_id, org_unit_id, period_key)
            if form is None:
                raise IllegalTransition("nothing has been submitted for this subject")
            allowed_here = legal_transitions(form.status, actor.role, self.policy)
            if action not in allowed_here:
                anyone = set()
                for role in Role:
                    anyone |= legal_transitions(form.status, role, self.policy)
                if action in anyone:
                    raise RoleDenied(
                        f"role {actor.role.value} may not {action.value} "
                        f"a {form.status.value} form"
                    )
                raise IllegalTransition(
                    f"{action.value} is not legal from {form.status.value}"
                )
            if not self._unit_in_scope(actor, org_unit_id):
                raise RoleDenied("subject outside the reviewer's administrative scope")
            if action is ReviewAction.REJECT and not (reason and reason.strip()):
                raise MissingReason("REJECT requires a reason")

            ops: list[dict] = []
            values = {
                eid: self.store.get_value(eid, org_unit_id, period_key)
                for eid in form.element_ids
            }
            values = {eid: rec for eid, rec in values.items() if rec is not None}

            justifications = dict(justifications or {})
            for eid, text in sorted(justifications.items()):
                rec = values.get(eid)
                if rec is None or not text.strip():
                    continue
                values[eid] = rec = replace(rec, justification=text.strip())
                ops.append(op_value(rec))

            if action is ReviewAction.VALIDATE:
                unjustified = sorted(
                    eid for eid, rec in values.items()
                    if rec.deviation_flagged and not rec.justification
                )
                if unjustified:
                    raise UnjustifiedDeviation(
                        "deviated values need justification before VALIDATE: "
                        + ", ".join(unjustified)
                    )

            new_status = {
                ReviewAction.VERIFY: Status.VERIFIED,
                ReviewAction.VALIDATE: Status.VALIDATED,
                ReviewAction.REJECT: Status.REJECTED,
            }[action]
            return self._transition_form(
                form, values, new_status, action.value, actor_id, at,
                reason=reason, ops=ops, extra_ops=extra_ops,
            )

    def publish(
        self,
        subject: Subject,
        actor_id: str,
        at: datetime | None = None,
        extra_ops: list[dict] | None = None,
    ) -> Transition:
        """VALIDATED -> PUBLISHED; published cells become publicly visible."""
        dataset_id, org_unit_id, period_key = subject
        self.bundle.dataset(dataset_id)
        self.bundle.tree.get(org_unit_id)
        actor = self._actor(actor_id)
        at = at or _utcnow()
        with self.store.lock:
            form = self.store.get_form(dataset_id, org_unit_id, period_key)
            if form is None:
                raise IllegalTransition("nothing has been submitted for this subject")
            allowed = legal_transitions(form.status, actor.role, self.policy)
            if ReviewAction.PUBLISH not in allowed:
                anyone = set()
                for role in Role:
                    anyone |= legal_transitions(form.status, role, self.policy)
                if ReviewAction.PUBLISH in anyone:
                    raise RoleDenied(
                        f"role {actor.role.value} may not publish"
                    )
                raise IllegalTransition(
                    f"PUBLISH is not legal from {form.status.value}"
                )
            if not self._unit_in_scope(actor, org_unit_id):
                raise RoleDenied("subject outside the reviewer's administrative scope")
            values = {
                eid: rec for eid in form.element_ids
                if (rec := self.store.get_value(eid, org_unit_id, period_key)) is not None
            }
            return self._transition_form(
                form, values, Status.PUBLISHED, "PUBLISH", actor_id, at,
                reason=None, ops=[], extra_ops=extra_ops,
            )

    def _transition_form(
        self,
        form: FormRecord,
        values: dict[str, DataValue],
        new_status: Status,
        action: str,
        actor_id: str,
        at: datetime,
        reason: str | None,
        ops: list[dict],
        extra_ops: list[dict] | None,
    ) -> Transition:
        change_values: dict[str, dict] = {}
        for eid in sorted(values):
            rec = values[eid]
            rec = replace(rec, status=new_status)
            ops.append(op_value(rec))
            change_values[eid] = {
                "value": rec.value,
                "version": rec.version,
                "status": new_status.value,
                "justification": rec.justification,
                "deviation_flagged": rec.deviation_flagged,
            }
        transition = Transition(
            dataset_id=form.dataset_id,
            org_unit_id=form.org_unit_id,
            period_key=form.period_key,
            from_status=form.status,
            to_status=new_status,
            action=action,
            actor=actor_id,
            at=at,
            reason=reason,
        )
        revision = form.revision + 1
        ops.append(op_form(FormRecord(
            dataset_id=form.dataset_id,
            org_unit_id=form.org_unit_id,
            period_key=form.period_key,
            status=new_status,
            revision=revision,
            submitted_at=form.submitted_at,
            element_ids=form.element_ids,
            entered_by=form.entered_by,
        )))
        ops.append(op_transition(transition))
        ops.append(op_change(
            action.lower(), form.dataset_id, form.org_unit_id, form.period_key,
            revision, new_status, change_values,
        ))
        if extra_ops:
            ops.extend(extra_ops)
        self.store.commit(ops)
        return transition


def _normalize_values(values: Mapping[str, object]) -> tuple[dict, dict[str, str]]:
    numbers: dict[str, object] = {}
    justifications: dict[str, str] = {}
    for eid, entry in values.items():
        if isinstance(entry, Mapping):
            numbers[eid] = entry.get("value")
            just = entry.get("justification")
            if just:
                justifications[eid] = str(just)
        else:
            numbers[eid] = entry
    return numbers, justifications


def blocking_hops(policy: FlowPolicy) -> int:
    """Logical gated hops between data entry and province-level visibility."""
    if not policy.blocking:
        return 0
    deepest = max(int(level) for level in policy.entry_levels)
    return deepest - int(OrgLevel.PROVINCE)


def flow_comparison(bundle: MetadataBundle | None) -> list[dict]:
    """Structural latency comparison of the three flow policies."""
    rows = []
    if bundle is None or len(bundle.tree) == 0:
        return rows
    for name in (PolicyName.CURRENT_A, PolicyName.PHASE1_B, PolicyName.PHASE2_C):
        policy = POLICIES[name]
        levels = "/".join(
            OrgLevel(level).name for level in sorted(policy.entry_levels)
        )
        rows.append({
            "policy": name.value,
            "entry_levels": levels,
            "blocking_hops": blocking_hops(policy),
            "review": "gates data flow" if policy.blocking else "concurrent with data flow",
        })
    return rows
