"""4C data-quality checks: current, correct, consistent, complete.

All checks are pure functions returning structured findings; BLOCK findings
gate submission, FLAG findings pass with (or pending) justification. The
scorecard composes the checks over a subtree for one period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from enum import Enum
from typing import TYPE_CHECKING, Mapping, Sequence

from .errors import ForeignElement, PeriodTypeMismatch, UnknownElement
from .model import DataElement, DataSet, MetadataBundle, ValueType
from .periods import Period

if TYPE_CHECKING:
    from .store import Store

DEFAULT_K_SIGMA = 3.0


class Dimension(str, Enum):
    CURRENT = "CURRENT"
    CORRECT = "CORRECT"
    CONSISTENT = "CONSISTENT"
    COMPLETE = "COMPLETE"


class Severity(str, Enum):
    BLOCK = "BLOCK"
    FLAG = "FLAG"


@dataclass(frozen=True)
class QualityFinding:
    dimension: Dimension
    severity: Severity
    subject: tuple[str, str, str]  # (element_or_dataset_id, org_unit_id, period_key)
    message: str
    requires_justification: bool = False

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension.value,
            "severity": self.severity.value,
            "subject": list(self.subject),
            "message": self.message,
            "requires_justification": self.requires_justification,
        }


@dataclass(frozen=True)
class ElementHistory:
    """Prior-period values for one (element, org unit), oldest first."""

    element_id: str
    org_unit_id: str
    points: tuple[tuple[str, float], ...]  # (period_key, value)

    @property
    def values(self) -> list[float]:
        return [v for _, v in self.points]


def check_correct(
    value: float,
    element: DataElement,
    org_unit_id: str = "",
    period_key: str = "",
) -> list[QualityFinding]:
    """Type and range validation for one value. BLOCK findings only."""
    subject = (element.id, org_unit_id, period_key)
    findings: list[QualityFinding] = []

    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        findings.append(QualityFinding(
            Dimension.CORRECT, Severity.BLOCK, subject,
            f"value {value!r} is not a finite number",
        ))
        return findings

    if element.value_type is ValueType.NON_NEGATIVE_INTEGER:
        if float(value) != int(value):
            findings.append(QualityFinding(
                Dimension.CORRECT, Severity.BLOCK, subject,
                f"value {value} is not an integer for integer element {element.id}",
            ))
        elif value < 0:
            findings.append(QualityFinding(
                Dimension.CORRECT, Severity.BLOCK, subject,
                f"value {value} is negative for non-negative element {element.id}",
            ))

    if element.range is not None and not findings:
        lo, hi = element.range
        if not lo <= float(value) <= hi:
            findings.append(QualityFinding(
                Dimension.CORRECT, Severity.BLOCK, subject,
                f"value {value} outside range [{lo:g}, {hi:g}] for element {element.id}",
            ))
    return findings


def check_complete(
    dataset: DataSet,
    entered: Mapping[str, float],
    org_unit_id: str,
    period_key: str,
) -> tuple[float, list[QualityFinding]]:
    """Completeness ratio plus one BLOCK finding naming any missing elements."""
    foreign = sorted(set(entered) - set(dataset.element_ids))
    if foreign:
        raise ForeignElement(
            f"elements {foreign} are not part of dataset {dataset.id}"
        )
    ratio = len(entered) / len(dataset.element_ids)
    findings: list[QualityFinding] = []
    if ratio < 1.0:
        missing = sorted(set(dataset.element_ids) - set(entered))
        findings.append(QualityFinding(
            Dimension.COMPLETE, Severity.BLOCK,
            (dataset.id, org_unit_id, period_key),
            f"form incomplete ({len(entered)}/{len(dataset.element_ids)}): "
            f"missing {', '.join(missing)}",
        ))
    return ratio, findings


def check_current(
    dataset: DataSet,
    period: Period,
    submitted_at: datetime,
    org_unit_id: str = "",
) -> QualityFinding | None:
    """FLAG LATE when submission lands after period end + deadline_days."""
    if period.period_type is not dataset.period_type:
        raise PeriodTypeMismatch(
            f"dataset {dataset.id} expects {dataset.period_type.value} periods, "
            f"got {period.key}"
        )
    deadline: date = period.end + timedelta(days=dataset.deadline_days)
    sub_date = submitted_at.astimezone(timezone.utc).date() if submitted_at.tzinfo \
        else submitted_at.date()
    if sub_date > deadline:
        return QualityFinding(
            Dimension.CURRENT, Severity.FLAG,
            (dataset.id, org_unit_id, period.key),
            f"LATE: submitted {sub_date.isoformat()}, deadline {deadline.isoformat()}",
        )
    return None


def check_consistent(
    value: float,
    element: DataElement,
    history: ElementHistory,
    k_sigma: float = DEFAULT_K_SIGMA,
    period_key: str = "",
) -> QualityFinding | None:
    """Deviation detection against the unit's own history.

    With at least three points and positive sample deviation, flags values
    beyond k_sigma standard deviations from the mean. With thinner or flat
    history, falls back to a cold-start rule: flag only when the value
    differs from every historical value by more than 100% relatively.
    """
    if k_sigma <= 0:
        raise ValueError("k_sigma must be > 0")
    values = history.values
    if not values:
        return None
    subject = (element.id, history.org_unit_id, period_key)
    n = len(values)
    mean = sum(values) / n
    if n >= 3:
        var = sum((v - mean) ** 2 for v in values) / (n - 1)
        s = math.sqrt(var)
        if s > 0:
            if abs(value - mean) > k_sigma * s:
                return QualityFinding(
                    Dimension.CONSISTENT, Severity.FLAG, subject,
                    f"value {value:g} deviates more than {k_sigma:g} sigma from "
                    f"history mean {mean:g} (s={s:g})",
                    requires_justification=True,
                )
            return None
    # cold start: fewer than 3 points, or zero spread
    if all(abs(value - h) > abs(h) for h in values):
        return QualityFinding(
            Dimension.CONSISTENT, Severity.FLAG, subject,
            f"value {value:g} differs from every prior value by more than 100%",
            requires_justification=True,
        )
    return None


CrossRule = tuple[str, str]  # (numerator_element_id, denominator_element_id)


class RuleStatus(str, Enum):
    OK = "OK"
    VIOLATED = "VIOLATED"
    UNEVALUATED = "UNEVALUATED"


def rule_statuses(
    values: Mapping[str, float],
    rules: Sequence[CrossRule],
    known_elements: Mapping[str, DataElement] | None = None,
) -> list[tuple[CrossRule, RuleStatus]]:
    out = []
    for num_id, den_id in rules:
        if known_elements is not None:
            if num_id not in known_elements:
                raise UnknownElement(f"rule references unknown element {num_id!r}")
            if den_id not in known_elements:
                raise UnknownElement(f"rule references unknown element {den_id!r}")
        if num_id in values and den_id in values:
            status = RuleStatus.VIOLATED if values[num_id] > values[den_id] else RuleStatus.OK
        else:
            status = RuleStatus.UNEVALUATED
        out.append(((num_id, den_id), status))
    return out


def cross_element_rules(
    values: Mapping[str, float],
    rules: Sequence[CrossRule],
    org_unit_id: str = "",
    period_key: str = "",
    known_elements: Mapping[str, DataElement] | None = None,
) -> list[QualityFinding]:
    """FLAG each numerator<=denominator rule violated by the given values.

    Rules whose operands are absent are skipped here; the scorecard reports
    them as UNEVALUATED so coverage gaps stay visible.
    """
    findings = []
    for (num_id, den_id), status in rule_statuses(values, rules, known_elements):
        if status is RuleStatus.VIOLATED:
            findings.append(QualityFinding(
                Dimension.CONSISTENT, Severity.FLAG,
                (num_id, org_unit_id, period_key),
                f"cross-element rule violated: {num_id} ({values[num_id]:g}) > "
                f"{den_id} ({values[den_id]:g})",
            ))
    return findings


def indicator_rules(bundle: MetadataBundle) -> list[CrossRule]:
    """Served-vs-target rules implied by the indicator catalog."""
    return [
        (ind.numerator_element_id, ind.denominator_element_id)
        for ind in (bundle.indicators[k] for k in sorted(bundle.indicators))
    ]


class Timeliness(str, Enum):
    OK = "OK"
    LATE = "LATE"
    MISSING = "MISSING"


@dataclass
class ScorecardRow:
    org_unit_id: str
    org_unit_name: str
    timeliness: Timeliness
    correct_violations: int
    consistency_flags: int
    unjustified_flags: int
    completeness: float
    rules_violated: int = 0
    rules_unevaluated: int = 0

    def to_dict(self) -> dict:
        return {
            "org_unit_id": self.org_unit_id,
            "org_unit_name": self.org_unit_name,
            "timeliness": self.timeliness.value,
            "correct_violations": self.correct_violations,
            "consistency_flags": self.consistency_flags,
            "unjustified_flags": self.unjustified_flags,
            "completeness": round(self.completeness, 6),
            "rules_violated": self.rules_violated,
            "rules_unevaluated": self.rules_unevaluated,
        }


def quality_scorecard(
    store: "Store",
    bundle: MetadataBundle,
    dataset: DataSet,
    subtree_root: str,
    period: Period,
    rules: Sequence[CrossRule] | None = None,
) -> list[ScorecardRow]:
    """Per-entry-unit 4C summary for one dataset and period under a root."""
    tree = bundle.tree
    tree.get(subtree_root)  # raises UnknownUnit
    if rules is None:
        rules = [
            r for r in indicator_rules(bundle)
            if r[0] in dataset.element_ids and r[1] in dataset.element_ids
        ]
    rows = []
    for uid in tree.subtree(subtree_root):
        if tree.nodes[uid].level != dataset.entry_level:
            continue
        facts = {
            eid: store.get_value(eid, uid, period.key)
            for eid in dataset.element_ids
        }
        facts = {eid: rec for eid, rec in facts.items() if rec is not None}
        values = {eid: rec.value for eid, rec in facts.items()}

        form = store.get_form(dataset.id, uid, period.key)
        if not facts or form is None or form.submitted_at is None:
            timeliness = Timeliness.MISSING
        else:
            late = check_current(dataset, period, form.submitted_at, uid)
            timeliness = Timeliness.LATE if late else Timeliness.OK

        correct = sum(
            len(check_correct(rec.value, bundle.element(eid), uid, period.key))
            for eid, rec in facts.items()
        )
        flagged = [rec for rec in facts.values() if rec.deviation_flagged]
        unjustified = [rec for rec in flagged if not rec.justification]
        statuses = rule_statuses(values, rules)
        rows.append(ScorecardRow(
            org_unit_id=uid,
            org_unit_name=tree.nodes[uid].name,
            timeliness=timeliness,
            correct_violations=correct,
            consistency_flags=len(flagged),
            unjustified_flags=len(unjustified),
            completeness=len(facts) / len(dataset.element_ids),
            rules_violated=sum(1 for _, s in statuses if s is RuleStatus.VIOLATED),
            rules_unevaluated=sum(1 for _, s in statuses if s is RuleStatus.UNEVALUATED),
        ))
    return rows
