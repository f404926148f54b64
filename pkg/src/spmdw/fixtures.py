"""Seed fixture: the capital-province unit tree (1 province, 5 cities plus
1 regency at city level), 12 coverage indicators with their elements,
per-program monthly forms, and scoped users.

Indicator numerators/denominators are placeholders pending official
definitions; the suite checks arithmetic, not epidemiology.
"""

from __future__ import annotations

import hashlib
import random
from datetime import datetime, time, timedelta, timezone

from .model import (
    Aggregation,
    DataElement,
    DataSet,
    Indicator,
    MetadataBundle,
    OrgLevel,
    OrgUnit,
    Program,
    Role,
    User,
    ValueType,
    build_org_tree,
)
from .periods import PeriodType, parse_period
from .store import Store
from .workflow import POLICIES, PolicyName, ReviewAction, Warehouse

CITIES = (
    ("ou-jakpus", "Central Jakarta City"),
    ("ou-jakut", "North Jakarta City"),
    ("ou-jaksel", "South Jakarta City"),
    ("ou-jaktim", "East Jakarta City"),
    ("ou-jakbar", "West Jakarta City"),
    ("ou-seribu", "Seribu Islands Regency"),
)

# (slug, indicator name, spm category, owning program)
INDICATOR_SPECS = (
    ("anc", "Antenatal care coverage", "pregnant_women_services", "prog-maternal"),
    ("delivery", "Facility delivery coverage", "delivery_services", "prog-maternal"),
    ("newborn", "Newborn care visit coverage", "newborn_services", "prog-child"),
    ("toddler", "Toddler health service coverage", "toddler_services", "prog-child"),
    ("school", "School-age screening coverage", "school_age_screening", "prog-school"),
    ("workage", "Working-age screening coverage", "working_age_screening", "prog-workforce"),
    ("elderly", "Elderly health service coverage", "elderly_services", "prog-elderly"),
    ("htn", "Hypertension care coverage", "hypertension_care", "prog-ncd"),
    ("dm", "Diabetes care coverage", "diabetes_care", "prog-ncd"),
    ("mental", "Severe mental disorder care coverage", "severe_mental_disorder_care", "prog-mental"),
    ("tb", "Tuberculosis service coverage", "tuberculosis_services", "prog-tb"),
    ("hiv", "HIV risk screening coverage", "hiv_risk_screening", "prog-hiv"),
)

PROGRAMS = (
    ("prog-maternal", "Maternal Health Program"),
    ("prog-child", "Child Health Program"),
    ("prog-immunization", "Immunization Program"),
    ("prog-school", "School Health Program"),
    ("prog-workforce", "Working-Age Health Program"),
    ("prog-elderly", "Elderly Health Program"),
    ("prog-ncd", "Noncommunicable Disease Program"),
    ("prog-mental", "Mental Health Program"),
    ("prog-tb", "Tuberculosis Program"),
    ("prog-hiv", "HIV Program"),
)


def password_for(user_id: str) -> str:
    return f"pw-{user_id}"


def password_hash(password: str) -> str:
    return hashlib.sha256(password.encode("utf-8")).hexdigest()


def build_units(districts_per_city: int = 2, subdistricts_per_district: int = 4) -> list[OrgUnit]:
    units = [OrgUnit("ou-dki", "DKI Jakarta Province", OrgLevel.PROVINCE, None)]
    for city_id, city_name in CITIES:
        units.append(OrgUnit(city_id, city_name, OrgLevel.ADMIN_CITY, "ou-dki"))
        for d in range(1, districts_per_city + 1):
            did = f"{city_id}-d{d}"
            units.append(OrgUnit(did, f"{city_name} District {d}", OrgLevel.DISTRICT, city_id))
            for s in range(1, subdistricts_per_district + 1):
                units.append(OrgUnit(
                    f"{did}-s{s}", f"{city_name} District {d} Subdistrict {s}",
                    OrgLevel.SUBDISTRICT, did,
                ))
    return units


def build_fixture(
    entry_level: OrgLevel = OrgLevel.SUBDISTRICT,
    districts_per_city: int = 2,
    subdistricts_per_district: int = 4,
    deadline_days: int = 5,
) -> MetadataBundle:
    tree = build_org_tree(build_units(districts_per_city, subdistricts_per_district))

    programs = {pid: Program(pid, name) for pid, name in PROGRAMS}

    elements: dict[str, DataElement] = {}
    indicators: dict[str, Indicator] = {}
    dataset_elements: dict[str, list[str]] = {pid: [] for pid, _ in PROGRAMS}
    for n, (slug, name, category, program_id) in enumerate(INDICATOR_SPECS, start=1):
        served = DataElement(
            id=f"el-{slug}-served",
            name=f"{name}: people served",
            value_type=ValueType.NON_NEGATIVE_INTEGER,
            owner_program_id=program_id,
            aggregation=Aggregation.SUM,
            range=(0, 1_000_000),
        )
        target = DataElement(
            id=f"el-{slug}-target",
            name=f"{name}: target population",
            value_type=ValueType.NON_NEGATIVE_INTEGER,
            owner_program_id=program_id,
            aggregation=Aggregation.SUM,
            range=(0, 1_000_000),
        )
        elements[served.id] = served
        elements[target.id] = target
        dataset_elements[program_id] += [served.id, target.id]
        indicators[f"ind-{n:02d}-{slug}"] = Indicator(
            id=f"ind-{n:02d}-{slug}",
            name=name,
            numerator_element_id=served.id,
            denominator_element_id=target.id,
            factor=100.0,
            spm_category=category,
        )

    extras = [
        DataElement(
            id="el-imm-basic-infants",
            name="Infants receiving complete basic immunization",
            value_type=ValueType.NON_NEGATIVE_INTEGER,
            owner_program_id="prog-immunization",
            aggregation=Aggregation.SUM,
            range=(0, 1_000_000),
        ),
        DataElement(
            id="el-maternal-hb-avg",
            name="Average maternal hemoglobin (g/dL)",
            value_type=ValueType.DECIMAL,
            owner_program_id="prog-maternal",
            aggregation=Aggregation.AVERAGE,
            range=(0, 25),
        ),
        DataElement(
            id="el-anc-first-visit-pct",
            name="First-trimester first ANC visit share",
            value_type=ValueType.PERCENT,
            owner_program_id="prog-maternal",
            aggregation=Aggregation.AVERAGE,
        ),
    ]
    for el in extras:
        elements[el.id] = el
    dataset_elements["prog-immunization"].append("el-imm-basic-infants")
    dataset_elements["prog-maternal"] += ["el-maternal-hb-avg", "el-anc-first-visit-pct"]

    datasets = {}
    for pid, pname in PROGRAMS:
        ds_id = f"ds-{pid.removeprefix('prog-')}"
        datasets[ds_id] = DataSet(
            id=ds_id,
            name=f"{pname} monthly report",
            period_type=PeriodType.MONTH,
            element_ids=tuple(dataset_elements[pid]),
            entry_level=entry_level,
            deadline_days=deadline_days,
            program_id=pid,
        )

    all_ds = frozenset(datasets)
    users = {
        "u-admin": User("u-admin", "System administrator", Role.ADMIN,
                        password_sha256=password_hash(password_for("u-admin"))),
        "u-dinkes": User(
            "u-dinkes", "Provincial health department manager",
            Role.DEPARTMENT_MANAGER,
            scope_org_unit_ids=frozenset({"ou-dki"}),
            scope_dataset_ids=all_ds,
            password_sha256=password_hash(password_for("u-dinkes")),
        ),
    }
    for city_id, city_name in CITIES:
        uid = f"u-sudin-{city_id.removeprefix('ou-')}"
        users[uid] = User(
            uid, f"{city_name} suboffice manager", Role.SUBOFFICE_MANAGER,
            scope_org_unit_ids=frozenset({city_id}),
            scope_dataset_ids=all_ds,
            password_sha256=password_hash(password_for(uid)),
        )
    tree_obj = tree
    for unit_id in tree_obj.units_at_level(entry_level):
        uid = f"u-pic-{unit_id.removeprefix('ou-')}"
        users[uid] = User(
            uid, f"Enumerator for {tree_obj.nodes[unit_id].name}", Role.ENUMERATOR_PIC,
            scope_org_unit_ids=frozenset({unit_id}),
            scope_dataset_ids=all_ds,
            password_sha256=password_hash(password_for(uid)),
        )

    bundle = MetadataBundle(
        tree=tree,
        programs=programs,
        elements=elements,
        datasets=datasets,
        indicators=indicators,
        users=users,
    )
    bundle.validate()
    return bundle


def pic_for(bundle: MetadataBundle, unit_id: str) -> str:
    uid = f"u-pic-{unit_id.removeprefix('ou-')}"
    bundle.user(uid)
    return uid


def suboffice_for(bundle: MetadataBundle, unit_id: str) -> str:
    city = bundle.tree.ancestor_at_level(unit_id, OrgLevel.ADMIN_CITY)
    return f"u-sudin-{city.removeprefix('ou-')}"


def form_values(bundle: MetadataBundle, dataset_id: str, unit_index: int,
                month_index: int, rng: random.Random) -> dict[str, float]:
    """Deterministic-ish complete form: served never exceeds target."""
    values: dict[str, float] = {}
    dataset = bundle.dataset(dataset_id)
    for eid in dataset.element_ids:
        el = bundle.element(eid)
        if eid.endswith("-target"):
            values[eid] = 80 + (unit_index * 7 + month_index * 3) % 120
        elif eid.endswith("-served"):
            target_id = eid.replace("-served", "-target")
            target = 80 + (unit_index * 7 + month_index * 3) % 120
            values[eid] = rng.randint(0, int(target))
            values.setdefault(target_id, target)
        elif el.value_type is ValueType.DECIMAL:
            values[eid] = round(rng.uniform(9.0, 14.0), 1)
        elif el.value_type is ValueType.PERCENT:
            values[eid] = round(rng.uniform(20.0, 95.0), 1)
        else:
            values[eid] = rng.randint(0, 200)
    return {eid: values[eid] for eid in dataset.element_ids}


def timely_timestamp(period_key: str) -> datetime:
    period = parse_period(period_key)
    return datetime.combine(
        period.end + timedelta(days=2), time(9, 0), tzinfo=timezone.utc
    )


def fill_store(
    warehouse: Warehouse,
    months: list[str],
    seed: int = 7,
    upto_status: str = "SUBMITTED",
    datasets: list[str] | None = None,
    units: list[str] | None = None,
) -> None:
    """Submit complete, timely forms everywhere; optionally review them up
    to VERIFIED / VALIDATED / PUBLISHED."""
    bundle = warehouse.bundle
    rng = random.Random(seed)
    ds_ids = datasets or sorted(bundle.datasets)
    order = {s: i for i, s in enumerate(("SUBMITTED", "VERIFIED", "VALIDATED", "PUBLISHED"))}
    if upto_status not in order:
        raise ValueError(f"unsupported fill status {upto_status!r}")
    depth = order[upto_status]
    for ds_id in ds_ids:
        dataset = bundle.dataset(ds_id)
        unit_ids = units or bundle.tree.units_at_level(dataset.entry_level)
        for m_idx, month in enumerate(months):
            for u_idx, unit_id in enumerate(unit_ids):
                values = form_values(bundle, ds_id, u_idx, m_idx, rng)
                warehouse.submit_form(
                    ds_id, unit_id, month, values,
                    pic_for(bundle, unit_id),
                    submitted_at=timely_timestamp(month),
                )
                subject = (ds_id, unit_id, month)
                at = timely_timestamp(month) + timedelta(hours=1)
                if depth >= 1:
                    warehouse.review(subject, ReviewAction.VERIFY,
                                     suboffice_for(bundle, unit_id), at=at)
                if depth >= 2:
                    warehouse.review(subject, ReviewAction.VALIDATE, "u-dinkes",
                                     at=at + timedelta(hours=1))
                if depth >= 3:
                    warehouse.publish(subject, "u-dinkes", at=at + timedelta(hours=2))


def new_warehouse(
    policy: PolicyName = PolicyName.PHASE2_C,
    entry_level: OrgLevel = OrgLevel.SUBDISTRICT,
    store: Store | None = None,
    **fixture_kwargs,
) -> Warehouse:
    bundle = build_fixture(entry_level=entry_level, **fixture_kwargs)
    return Warehouse(bundle, store or Store(), POLICIES[policy])


# -- bundled simulator schedules -------------------------------------------------

def flaky_network_schedule(bundle: MetadataBundle) -> dict:
    """One client losing connectivity mid-entry: three forms queued offline,
    flushed after reconnect (with retry-after-dropped-ack chaos)."""
    unit = bundle.tree.units_at_level(OrgLevel.SUBDISTRICT)[0]
    user = pic_for(bundle, unit)
    ds = sorted(bundle.datasets)[0]
    months = ["2021-01", "2021-02", "2021-03"]
    events = [{"t": 0, "client": "c1", "action": "disconnect"}]
    for i, month in enumerate(months):
        values = form_values(bundle, ds, 0, i, random.Random(i))
        events.append({
            "t": i + 1, "client": "c1", "action": "submit",
            "dataset": ds, "org_unit": unit, "period": month, "values": values,
        })
    events.append({"t": 10, "client": "c1", "action": "connect"})
    return {
        "drop_rate": 0.3,
        "clients": [{"id": "c1", "user": user}],
        "events": events,
    }


def racing_clients_schedule(bundle: MetadataBundle) -> dict:
    """Two clients editing the same subject while partitioned: exactly one
    stale write, resolved as a conflict ticket."""
    unit = bundle.tree.units_at_level(OrgLevel.SUBDISTRICT)[0]
    user = pic_for(bundle, unit)
    ds = sorted(bundle.datasets)[0]
    v1 = form_values(bundle, ds, 0, 0, random.Random(1))
    v2 = form_values(bundle, ds, 0, 0, random.Random(2))
    return {
        "drop_rate": 0.0,
        "clients": [{"id": "c1", "user": user}, {"id": "c2", "user": user}],
        "events": [
            {"t": 0, "client": "c2", "action": "disconnect"},
            {"t": 1, "client": "c1", "action": "submit",
             "dataset": ds, "org_unit": unit, "period": "2021-01", "values": v1},
            {"t": 2, "client": "c2", "action": "submit",
             "dataset": ds, "org_unit": unit, "period": "2021-01", "values": v2},
            {"t": 3, "client": "c2", "action": "connect"},
        ],
    }


def random_disjoint_schedule(bundle: MetadataBundle, n_clients: int, seed: int) -> dict:
    """Random partitions, duplicates (via dropped acks), and interleavings
    over client-disjoint subjects; safe to compare against the connected
    replay oracle."""
    rng = random.Random(seed)
    subdistricts = bundle.tree.units_at_level(OrgLevel.SUBDISTRICT)
    n_clients = min(n_clients, len(subdistricts))
    ds_ids = sorted(bundle.datasets)
    months = ["2021-01", "2021-02", "2021-03"]
    clients = []
    events = []
    t = 0
    for i in range(n_clients):
        unit = subdistricts[i]
        cid = f"c{i + 1}"
        clients.append({"id": cid, "user": pic_for(bundle, unit)})
        connected = True
        for ds_id in rng.sample(ds_ids, k=rng.randint(1, 3)):
            for m_idx, month in enumerate(rng.sample(months, k=rng.randint(1, len(months)))):
                t += 1
                if rng.random() < 0.4:
                    events.append({
                        "t": t, "client": cid,
                        "action": "disconnect" if connected else "connect",
                    })
                    connected = not connected
                    t += 1
                events.append({
                    "t": t, "client": cid, "action": "submit",
                    "dataset": ds_id, "org_unit": unit, "period": month,
                    "values": form_values(bundle, ds_id, i, m_idx, rng),
                })
    return {"drop_rate": 0.3, "clients": clients, "events": events}
