"""Metadata and fact model: org units, programs, elements, datasets,
indicators, users, and the single-entry authority rule.

Identifiers are opaque strings supplied by metadata import so fixtures stay
reproducible. Metadata is read-mostly; loaders build a full bundle and swap
it in one piece.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum, IntEnum
from typing import Iterable, Iterator

from .errors import (
    CycleDetected,
    DanglingParent,
    DuplicateId,
    LevelSkip,
    MalformedMetadata,
    MultipleRoots,
    UnknownDataset,
    UnknownElement,
    UnknownIndicator,
    UnknownProgram,
    UnknownUnit,
    UnknownUser,
)
from .periods import PeriodType


class OrgLevel(IntEnum):
    PROVINCE = 1
    ADMIN_CITY = 2
    DISTRICT = 3
    SUBDISTRICT = 4


class ValueType(str, Enum):
    NON_NEGATIVE_INTEGER = "NON_NEGATIVE_INTEGER"
    DECIMAL = "DECIMAL"
    PERCENT = "PERCENT"


class Aggregation(str, Enum):
    SUM = "SUM"
    AVERAGE = "AVERAGE"


class Status(str, Enum):
    DRAFT = "DRAFT"
    SUBMITTED = "SUBMITTED"
    VERIFIED = "VERIFIED"
    VALIDATED = "VALIDATED"
    PUBLISHED = "PUBLISHED"
    REJECTED = "REJECTED"

    @property
    def rank(self) -> int:
        return _STATUS_RANK[self]


# REJECTED ranks below DRAFT so it never satisfies any min-status floor.
_STATUS_RANK = {
    Status.REJECTED: -1,
    Status.DRAFT: 0,
    Status.SUBMITTED: 1,
    Status.VERIFIED: 2,
    Status.VALIDATED: 3,
    Status.PUBLISHED: 4,
}

RANK_TO_STATUS = {v: k for k, v in _STATUS_RANK.items()}


class Role(str, Enum):
    ENUMERATOR_PIC = "ENUMERATOR_PIC"
    SUBOFFICE_MANAGER = "SUBOFFICE_MANAGER"
    DEPARTMENT_MANAGER = "DEPARTMENT_MANAGER"
    ADMIN = "ADMIN"

    @property
    def rank(self) -> int:
        return {
            Role.ENUMERATOR_PIC: 0,
            Role.SUBOFFICE_MANAGER: 1,
            Role.DEPARTMENT_MANAGER: 2,
            Role.ADMIN: 3,
        }[self]


# The 12 mandated minimum-service health categories.
SPM_CATEGORIES = (
    "pregnant_women_services",
    "delivery_services",
    "newborn_services",
    "toddler_services",
    "school_age_screening",
    "working_age_screening",
    "elderly_services",
    "hypertension_care",
    "diabetes_care",
    "severe_mental_disorder_care",
    "tuberculosis_services",
    "hiv_risk_screening",
)


@dataclass(frozen=True)
class OrgUnit:
    id: str
    name: str
    level: OrgLevel
    parent_id: str | None = None


@dataclass(frozen=True)
class Program:
    id: str
    name: str


@dataclass(frozen=True)
class DataElement:
    id: str
    name: str
    value_type: ValueType
    owner_program_id: str
    aggregation: Aggregation = Aggregation.SUM
    range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.range is None and self.value_type is ValueType.PERCENT:
            object.__setattr__(self, "range", (0.0, 100.0))
        if self.range is not None:
            lo, hi = self.range
            if lo > hi:
                raise MalformedMetadata(f"element {self.id}: range min {lo} > max {hi}")
            object.__setattr__(self, "range", (float(lo), float(hi)))


@dataclass(frozen=True)
class DataSet:
    id: str
    name: str
    period_type: PeriodType
    element_ids: tuple[str, ...]
    entry_level: OrgLevel
    deadline_days: int
    program_id: str

    def __post_init__(self):
        if not self.element_ids:
            raise MalformedMetadata(f"dataset {self.id}: element_ids must be non-empty")
        if self.deadline_days < 0:
            raise MalformedMetadata(f"dataset {self.id}: deadline_days must be >= 0")


@dataclass(frozen=True)
class Indicator:
    id: str
    name: str
    numerator_element_id: str
    denominator_element_id: str
    factor: float
    spm_category: str

    def __post_init__(self):
        if self.factor <= 0:
            raise MalformedMetadata(f"indicator {self.id}: factor must be > 0")
        if self.spm_category not in SPM_CATEGORIES:
            raise MalformedMetadata(
                f"indicator {self.id}: unknown spm_category {self.spm_category!r}"
            )


@dataclass(frozen=True)
class User:
    id: str
    name: str
    role: Role
    scope_org_unit_ids: frozenset[str] = frozenset()
    scope_dataset_ids: frozenset[str] = frozenset()
    password_sha256: str | None = None


@dataclass(frozen=True)
class DataValue:
    """One versioned, workflow-stamped numeric fact at (element, unit, period)."""

    element_id: str
    org_unit_id: str
    period_key: str
    value: float
    status: Status
    version: int
    entered_by: str
    updated_at: datetime
    justification: str | None = None
    deviation_flagged: bool = False


class OrgTree:
    """Validated administrative hierarchy with parent/child indexes."""

    def __init__(self, nodes: dict[str, OrgUnit], root_id: str,
                 children: dict[str, tuple[str, ...]], preorder: tuple[str, ...]):
        self.nodes = nodes
        self.root_id = root_id
        self._children = children
        self.preorder = preorder
        self._preorder_index = {uid: i for i, uid in enumerate(preorder)}

    def __contains__(self, unit_id: str) -> bool:
        return unit_id in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def get(self, unit_id: str) -> OrgUnit:
        try:
            return self.nodes[unit_id]
        except KeyError:
            raise UnknownUnit(f"unknown org unit {unit_id!r}") from None

    def children(self, unit_id: str) -> tuple[str, ...]:
        self.get(unit_id)
        return self._children.get(unit_id, ())

    def ancestors(self, unit_id: str) -> list[OrgUnit]:
        """Chain from the parent up to the root; empty for the root."""
        node = self.get(unit_id)
        out = []
        while node.parent_id is not None:
            node = self.nodes[node.parent_id]
            out.append(node)
        return out

    def ancestor_at_level(self, unit_id: str, level: OrgLevel) -> str | None:
        """The unit itself or its ancestor at the given level, if any."""
        node = self.get(unit_id)
        if node.level == level:
            return node.id
        for anc in self.ancestors(unit_id):
            if anc.level == level:
                return anc.id
        return None

    def subtree(self, root_id: str) -> Iterator[str]:
        """Preorder walk of root and all its descendants."""
        self.get(root_id)
        stack = [root_id]
        while stack:
            uid = stack.pop()
            yield uid
            stack.extend(reversed(self._children.get(uid, ())))

    def units_at_level(self, level: OrgLevel) -> list[str]:
        return [uid for uid in self.preorder if self.nodes[uid].level == level]

    def preorder_index(self, unit_id: str) -> int:
        self.get(unit_id)
        return self._preorder_index[unit_id]

    def is_within(self, unit_id: str, root_id: str) -> bool:
        """True when unit_id is root_id or one of its descendants."""
        node = self.get(unit_id)
        if node.id == root_id:
            return True
        return any(a.id == root_id for a in self.ancestors(unit_id))


def build_org_tree(nodes: Iterable[OrgUnit]) -> OrgTree:
    """Validate the administrative hierarchy and index it.

    Rejects duplicate ids, multiple/zero roots, dangling parents, parent
    levels that are not exactly one step above the child, and cycles.
    """
    by_id: dict[str, OrgUnit] = {}
    for node in nodes:
        if node.id in by_id:
            raise DuplicateId(f"duplicate org unit id {node.id!r}")
        by_id[node.id] = node
    if not by_id:
        raise MalformedMetadata("org tree requires at least one unit")

    roots = [n for n in by_id.values() if n.parent_id is None]
    if len(roots) > 1:
        raise MultipleRoots(f"{len(roots)} units without a parent")
    if not roots:
        raise CycleDetected("no root unit; parent references form a cycle")
    root = roots[0]
    if root.level != OrgLevel.PROVINCE:
        raise LevelSkip(f"root {root.id!r} must be at PROVINCE level")

    children: dict[str, list[str]] = {}
    for node in by_id.values():
        if node.parent_id is None:
            continue
        if node.parent_id == node.id:
            raise CycleDetected(f"unit {node.id!r} is its own parent")
        parent = by_id.get(node.parent_id)
        if parent is None:
            raise DanglingParent(f"unit {node.id!r} references missing parent {node.parent_id!r}")
        if int(parent.level) != int(node.level) - 1:
            raise LevelSkip(
                f"unit {node.id!r} at level {int(node.level)} under parent "
                f"{parent.id!r} at level {int(parent.level)}"
            )
        children.setdefault(node.parent_id, []).append(node.id)

    for kids in children.values():
        kids.sort()  # deterministic preorder independent of input order

    # Reachability from the root doubles as the cycle check: a cycle can
    # never be reached from the root, so its members go undiscovered.
    preorder: list[str] = []
    stack = [root.id]
    seen: set[str] = set()
    while stack:
        uid = stack.pop()
        if uid in seen:
            raise CycleDetected(f"unit {uid!r} reached twice")
        seen.add(uid)
        preorder.append(uid)
        stack.extend(reversed(children.get(uid, [])))
    if len(seen) != len(by_id):
        stranded = sorted(set(by_id) - seen)
        raise CycleDetected(f"units unreachable from root: {stranded}")

    return OrgTree(
        by_id,
        root.id,
        {k: tuple(v) for k, v in children.items()},
        tuple(preorder),
    )


def check_authority(element: DataElement, submitting_program: Program) -> bool:
    """Single-entry rule: only the owner program may report an element."""
    return element.owner_program_id == submitting_program.id


@dataclass
class MetadataBundle:
    """Full metadata snapshot: the unit tree plus all reference entities."""

    tree: OrgTree
    programs: dict[str, Program] = field(default_factory=dict)
    elements: dict[str, DataElement] = field(default_factory=dict)
    datasets: dict[str, DataSet] = field(default_factory=dict)
    indicators: dict[str, Indicator] = field(default_factory=dict)
    users: dict[str, User] = field(default_factory=dict)

    def program(self, program_id: str) -> Program:
        try:
            return self.programs[program_id]
        except KeyError:
            raise UnknownProgram(f"unknown program {program_id!r}") from None

    def element(self, element_id: str) -> DataElement:
        try:
            return self.elements[element_id]
        except KeyError:
            raise UnknownElement(f"unknown data element {element_id!r}") from None

    def dataset(self, dataset_id: str) -> DataSet:
        try:
            return self.datasets[dataset_id]
        except KeyError:
            raise UnknownDataset(f"unknown dataset {dataset_id!r}") from None

    def indicator(self, indicator_id: str) -> Indicator:
        try:
            return self.indicators[indicator_id]
        except KeyError:
            raise UnknownIndicator(f"unknown indicator {indicator_id!r}") from None

    def user(self, user_id: str) -> User:
        try:
            return self.users[user_id]
        except KeyError:
            raise UnknownUser(f"unknown user {user_id!r}") from None

    def datasets_containing(self, element_id: str) -> list[DataSet]:
        return [ds for ds in self.datasets.values() if element_id in ds.element_ids]

    def entry_levels_for_element(self, element_id: str) -> set[OrgLevel]:
        return {ds.entry_level for ds in self.datasets_containing(element_id)}

    def validate(self) -> None:
        """Cross-entity referential checks; raises on the first violation."""
        for el in self.elements.values():
            self.program(el.owner_program_id)
        for ds in self.datasets.values():
            self.program(ds.program_id)
            for eid in ds.element_ids:
                self.element(eid)
        for ind in self.indicators.values():
            self.element(ind.numerator_element_id)
            self.element(ind.denominator_element_id)
        for user in self.users.values():
            for uid in user.scope_org_unit_ids:
                self.tree.get(uid)
            for dsid in user.scope_dataset_ids:
                self.dataset(dsid)
            if user.role is Role.ENUMERATOR_PIC:
                if not user.scope_org_unit_ids:
                    raise MalformedMetadata(f"PIC {user.id!r} has an empty org unit scope")
                entry_levels = {ds.entry_level for ds in self.datasets.values()}
                for uid in user.scope_org_unit_ids:
                    if self.tree.get(uid).level not in entry_levels:
                        raise MalformedMetadata(
                            f"PIC {user.id!r} scoped to non-entry-level unit {uid!r}"
                        )


# -- interchange file ---------------------------------------------------------

def bundle_to_dict(bundle: MetadataBundle, include_secrets: bool = True) -> dict:
    def unit(u: OrgUnit) -> dict:
        return {"id": u.id, "name": u.name, "level": int(u.level), "parent_id": u.parent_id}

    def element(e: DataElement) -> dict:
        return {
            "id": e.id,
            "name": e.name,
            "value_type": e.value_type.value,
            "range": list(e.range) if e.range else None,
            "owner_program_id": e.owner_program_id,
            "aggregation": e.aggregation.value,
        }

    def dataset(d: DataSet) -> dict:
        return {
            "id": d.id,
            "name": d.name,
            "period_type": d.period_type.value,
            "element_ids": list(d.element_ids),
            "entry_level": int(d.entry_level),
            "deadline_days": d.deadline_days,
            "program_id": d.program_id,
        }

    def indicator(i: Indicator) -> dict:
        return {
            "id": i.id,
            "name": i.name,
            "numerator_element_id": i.numerator_element_id,
            "denominator_element_id": i.denominator_element_id,
            "factor": i.factor,
            "spm_category": i.spm_category,
        }

    def user(u: User) -> dict:
        out = {
            "id": u.id,
            "name": u.name,
            "role": u.role.value,
            "scope_org_unit_ids": sorted(u.scope_org_unit_ids),
            "scope_dataset_ids": sorted(u.scope_dataset_ids),
        }
        if include_secrets and u.password_sha256:
            out["password_sha256"] = u.password_sha256
        return out

    return {
        "orgUnits": [unit(bundle.tree.nodes[uid]) for uid in bundle.tree.preorder],
        "programs": [
            {"id": p.id, "name": p.name} for p in _sorted(bundle.programs)
        ],
        "dataElements": [element(e) for e in _sorted(bundle.elements)],
        "dataSets": [dataset(d) for d in _sorted(bundle.datasets)],
        "indicators": [indicator(i) for i in _sorted(bundle.indicators)],
        "users": [user(u) for u in _sorted(bundle.users)],
    }


def _sorted(entities: dict):
    return [entities[k] for k in sorted(entities)]


def bundle_from_dict(doc: dict) -> MetadataBundle:
    if not isinstance(doc, dict):
        raise MalformedMetadata("metadata document must be an object")
    try:
        units = [
            OrgUnit(
                id=o["id"],
                name=o["name"],
                level=OrgLevel(int(o["level"])),
                parent_id=o.get("parent_id"),
            )
            for o in doc.get("orgUnits", [])
        ]
        programs = {o["id"]: Program(o["id"], o["name"]) for o in doc.get("programs", [])}
        elements = {}
        for o in doc.get("dataElements", []):
            rng = o.get("range")
            elements[o["id"]] = DataElement(
                id=o["id"],
                name=o["name"],
                value_type=ValueType(o["value_type"]),
                range=tuple(rng) if rng else None,
                owner_program_id=o["owner_program_id"],
                aggregation=Aggregation(o.get("aggregation", "SUM")),
            )
        datasets = {
            o["id"]: DataSet(
                id=o["id"],
                name=o["name"],
                period_type=PeriodType(o["period_type"]),
                element_ids=tuple(o["element_ids"]),
                entry_level=OrgLevel(int(o["entry_level"])),
                deadline_days=int(o["deadline_days"]),
                program_id=o["program_id"],
            )
            for o in doc.get("dataSets", [])
        }
        indicators = {
            o["id"]: Indicator(
                id=o["id"],
                name=o["name"],
                numerator_element_id=o["numerator_element_id"],
                denominator_element_id=o["denominator_element_id"],
                factor=float(o["factor"]),
                spm_category=o["spm_category"],
            )
            for o in doc.get("indicators", [])
        }
        users = {
            o["id"]: User(
                id=o["id"],
                name=o["name"],
                role=Role(o["role"]),
                scope_org_unit_ids=frozenset(o.get("scope_org_unit_ids", [])),
                scope_dataset_ids=frozenset(o.get("scope_dataset_ids", [])),
                password_sha256=o.get("password_sha256"),
            )
            for o in doc.get("users", [])
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedMetadata(f"bad metadata entity: {exc}") from exc

    bundle = MetadataBundle(
        tree=build_org_tree(units),
        programs=programs,
        elements=elements,
        datasets=datasets,
        indicators=indicators,
        users=users,
    )
    bundle.validate()
    return bundle


def load_metadata(path) -> MetadataBundle:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedMetadata(
                f"metadata is not valid JSON: line {exc.lineno} column {exc.colno}"
            ) from exc
    return bundle_from_dict(doc)


def dump_metadata(bundle: MetadataBundle, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(bundle_to_dict(bundle), fh, indent=2, sort_keys=False)
        fh.write("\n")
