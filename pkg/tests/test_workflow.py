import random
from dataclasses import replace
from datetime import timedelta

import pytest

from spmdw.errors import (
    BlockedByQuality,
    IllegalTransition,
    MissingReason,
    RoleDenied,
    ScopeDenied,
    UnjustifiedDeviation,
    WrongLevel,
)
from spmdw.fixtures import (
    build_fixture,
    form_values,
    new_warehouse,
    pic_for,
    suboffice_for,
    timely_timestamp,
)
from spmdw.model import (
    DataSet,
    MetadataBundle,
    OrgLevel,
    Role,
    Status,
)
from spmdw.periods import PeriodType
from spmdw.quality import Dimension, Severity
from spmdw.rollup import AnalyticsEngine
from spmdw.store import Store
from spmdw.workflow import (
    POLICIES,
    PolicyName,
    ReviewAction,
    Warehouse,
    blocking_hops,
    flow_comparison,
    legal_transitions,
)

DS = "ds-tb"  # two-element dataset keeps the tests small
UNIT = "ou-jakpus-d1-s1"
MONTH = "2021-01"


def submit(wh, month=MONTH, unit=UNIT, served=100, target=120, ds=DS, actor=None):
    values = {"el-tb-served": served, "el-tb-target": target}
    return wh.submit_form(
        ds, unit, month, values, actor or pic_for(wh.bundle, unit),
        submitted_at=timely_timestamp(month),
    )


def fresh():
    return new_warehouse()


# -- submission ------------------------------------------------------------------


def test_happy_path_versions_start_at_one(warehouse):
    result = submit(warehouse)
    assert set(result.versions) == {"el-tb-served", "el-tb-target"}
    assert all(v == 1 for v in result.versions.values())
    for eid in result.versions:
        rec = warehouse.store.get_value(eid, UNIT, MONTH)
        assert rec.status is Status.SUBMITTED
        assert rec.version == 1


def test_incomplete_form_stores_nothing(warehouse):
    with pytest.raises(BlockedByQuality) as exc:
        warehouse.submit_form(
            DS, UNIT, MONTH, {"el-tb-served": 100},
            pic_for(warehouse.bundle, UNIT),
            submitted_at=timely_timestamp(MONTH),
        )
    findings = exc.value.findings
    assert any(f.dimension is Dimension.COMPLETE and f.severity is Severity.BLOCK
               for f in findings)
    assert warehouse.store.get_value("el-tb-served", UNIT, MONTH) is None
    assert warehouse.store.get_form(DS, UNIT, MONTH) is None
    assert warehouse.store.snapshot_id == 0


def test_out_of_range_value_blocked(warehouse):
    with pytest.raises(BlockedByQuality):
        submit(warehouse, served=-5)
    assert warehouse.store.snapshot_id == 0


def test_pic_cannot_submit_for_other_unit(warehouse):
    other_pic = pic_for(warehouse.bundle, "ou-jaksel-d1-s1")
    with pytest.raises(ScopeDenied):
        warehouse.submit_form(
            DS, UNIT, MONTH, {"el-tb-served": 1, "el-tb-target": 2}, other_pic,
        )


def test_manager_cannot_enter_data(warehouse):
    with pytest.raises(ScopeDenied):
        submit(warehouse, actor="u-dinkes")


def test_wrong_level_rejected(warehouse):
    with pytest.raises(WrongLevel):
        warehouse.submit_form(
            DS, "ou-jakpus", MONTH, {"el-tb-served": 1, "el-tb-target": 2}, "u-admin",
        )


def test_policy_entry_level_enforced(bundle):
    # PHASE1_B accepts entry at ADMIN_CITY only; subdistrict datasets are out
    wh = Warehouse(bundle, Store(), POLICIES[PolicyName.PHASE1_B])
    with pytest.raises(WrongLevel):
        submit(wh)


def mixed_program_bundle() -> MetadataBundle:
    """A child-program form carrying an immunization-owned element — the
    contradiction the single-entry rule eliminates."""
    b = build_fixture()
    mixed = DataSet(
        "ds-mixed", "Child health form with immunization count", PeriodType.MONTH,
        ("el-imm-basic-infants", "el-toddler-served", "el-toddler-target"),
        OrgLevel.SUBDISTRICT, 5, "prog-child",
    )
    users = {
        uid: (replace(u, scope_dataset_ids=u.scope_dataset_ids | {"ds-mixed"})
              if u.scope_dataset_ids else u)
        for uid, u in b.users.items()
    }
    return MetadataBundle(
        tree=b.tree, programs=b.programs, elements=b.elements,
        datasets={**b.datasets, "ds-mixed": mixed},
        indicators=b.indicators, users=users,
    )


def test_non_owner_program_submission_denied():
    wh = Warehouse(mixed_program_bundle(), Store())
    values = {"el-imm-basic-infants": 50, "el-toddler-served": 80, "el-toddler-target": 100}
    with pytest.raises(BlockedByQuality) as exc:
        wh.submit_form("ds-mixed", UNIT, MONTH, values, pic_for(wh.bundle, UNIT),
                       submitted_at=timely_timestamp(MONTH))
    assert any("authority" in f.message for f in exc.value.findings)
    assert wh.store.get_value("el-imm-basic-infants", UNIT, MONTH) is None


def test_owner_program_form_accepted():
    wh = fresh()
    result = wh.submit_form(
        "ds-immunization", UNIT, MONTH, {"el-imm-basic-infants": 50},
        pic_for(wh.bundle, UNIT), submitted_at=timely_timestamp(MONTH),
    )
    assert result.versions == {"el-imm-basic-infants": 1}


def test_resubmission_before_review_bumps_versions(warehouse):
    submit(warehouse, served=100)
    result = submit(warehouse, served=90)
    assert result.versions["el-tb-served"] == 2
    assert warehouse.store.get_value("el-tb-served", UNIT, MONTH).value == 90


# -- review chain -----------------------------------------------------------------


def verify(wh, subject=None, actor=None):
    subject = subject or (DS, UNIT, MONTH)
    return wh.review(subject, ReviewAction.VERIFY,
                     actor or suboffice_for(wh.bundle, subject[1]))


def test_verify_then_validate_then_publish(warehouse):
    submit(warehouse)
    t1 = verify(warehouse)
    assert (t1.from_status, t1.to_status) == (Status.SUBMITTED, Status.VERIFIED)
    t2 = warehouse.review((DS, UNIT, MONTH), ReviewAction.VALIDATE, "u-dinkes")
    assert t2.to_status is Status.VALIDATED
    t3 = warehouse.publish((DS, UNIT, MONTH), "u-dinkes")
    assert t3.to_status is Status.PUBLISHED
    rec = warehouse.store.get_value("el-tb-served", UNIT, MONTH)
    assert rec.status is Status.PUBLISHED
    assert rec.version == 1  # review never bumps value versions


def test_validate_requires_verified_first(warehouse):
    submit(warehouse)
    with pytest.raises(IllegalTransition):
        warehouse.review((DS, UNIT, MONTH), ReviewAction.VALIDATE, "u-dinkes")


def test_backward_verify_is_illegal(warehouse):
    submit(warehouse)
    verify(warehouse)
    warehouse.review((DS, UNIT, MONTH), ReviewAction.VALIDATE, "u-dinkes")
    with pytest.raises(IllegalTransition):
        verify(warehouse)


def test_pic_cannot_review(warehouse):
    submit(warehouse)
    with pytest.raises(RoleDenied):
        warehouse.review((DS, UNIT, MONTH), ReviewAction.VERIFY, pic_for(warehouse.bundle, UNIT))


def test_reject_requires_reason(warehouse):
    submit(warehouse)
    with pytest.raises(MissingReason):
        warehouse.review((DS, UNIT, MONTH), ReviewAction.REJECT,
                         suboffice_for(warehouse.bundle, UNIT))


def test_reject_returns_form_for_resubmission(warehouse):
    submit(warehouse, served=100)
    warehouse.review((DS, UNIT, MONTH), ReviewAction.REJECT,
                     suboffice_for(warehouse.bundle, UNIT), reason="numbers look copied")
    assert warehouse.store.get_form(DS, UNIT, MONTH).status is Status.REJECTED
    result = submit(warehouse, served=95)
    assert result.versions["el-tb-served"] == 2
    assert warehouse.store.get_form(DS, UNIT, MONTH).status is Status.SUBMITTED


def test_out_of_scope_manager_denied(warehouse):
    submit(warehouse)
    with pytest.raises(RoleDenied):
        warehouse.review((DS, UNIT, MONTH), ReviewAction.VERIFY, "u-sudin-jaksel")


def test_publish_requires_department(warehouse):
    submit(warehouse)
    verify(warehouse)
    warehouse.review((DS, UNIT, MONTH), ReviewAction.VALIDATE, "u-dinkes")
    with pytest.raises(RoleDenied):
        warehouse.publish((DS, UNIT, MONTH), suboffice_for(warehouse.bundle, UNIT))


def test_publish_from_submitted_is_illegal(warehouse):
    submit(warehouse)
    with pytest.raises(IllegalTransition):
        warehouse.publish((DS, UNIT, MONTH), "u-dinkes")


# -- deviation justification gate ----------------------------------------------------


def deviated_warehouse():
    """Three stable months then a spike: the spike is flagged on entry."""
    wh = fresh()
    for month, served in (("2021-01", 100), ("2021-02", 101), ("2021-03", 99)):
        submit(wh, month=month, served=served, target=120)
    result = submit(wh, month="2021-04", served=500, target=120)
    assert any(f.requires_justification for f in result.findings)
    return wh


def test_deviation_recorded_on_submit():
    wh = deviated_warehouse()
    rec = wh.store.get_value("el-tb-served", UNIT, "2021-04")
    assert rec.deviation_flagged is True
    assert rec.justification is None


def test_verify_tolerates_unjustified_deviation():
    wh = deviated_warehouse()
    t = wh.review((DS, UNIT, "2021-04"), ReviewAction.VERIFY,
                  suboffice_for(wh.bundle, UNIT))
    assert t.to_status is Status.VERIFIED


def test_validate_blocks_unjustified_deviation():
    wh = deviated_warehouse()
    wh.review((DS, UNIT, "2021-04"), ReviewAction.VERIFY, suboffice_for(wh.bundle, UNIT))
    with pytest.raises(UnjustifiedDeviation):
        wh.review((DS, UNIT, "2021-04"), ReviewAction.VALIDATE, "u-dinkes")


def test_justification_clears_the_gate():
    wh = deviated_warehouse()
    wh.review((DS, UNIT, "2021-04"), ReviewAction.VERIFY, suboffice_for(wh.bundle, UNIT))
    t = wh.review(
        (DS, UNIT, "2021-04"), ReviewAction.VALIDATE, "u-dinkes",
        justifications={"el-tb-served": "mass screening campaign in April"},
    )
    assert t.to_status is Status.VALIDATED
    rec = wh.store.get_value("el-tb-served", UNIT, "2021-04")
    assert rec.justification == "mass screening campaign in April"


def test_justification_at_entry_also_clears():
    wh = fresh()
    for month, served in (("2021-01", 100), ("2021-02", 101), ("2021-03", 99)):
        submit(wh, month=month, served=served)
    wh.submit_form(
        DS, UNIT, "2021-04",
        {"el-tb-served": {"value": 480, "justification": "campaign"},
         "el-tb-target": 120},
        pic_for(wh.bundle, UNIT), submitted_at=timely_timestamp("2021-04"),
    )
    wh.review((DS, UNIT, "2021-04"), ReviewAction.VERIFY, suboffice_for(wh.bundle, UNIT))
    t = wh.review((DS, UNIT, "2021-04"), ReviewAction.VALIDATE, "u-dinkes")
    assert t.to_status is Status.VALIDATED


# -- legal transitions ---------------------------------------------------------------


def test_legal_transitions_examples():
    phase2 = POLICIES[PolicyName.PHASE2_C]
    assert legal_transitions(Status.SUBMITTED, Role.SUBOFFICE_MANAGER, phase2) \
        == {ReviewAction.VERIFY, ReviewAction.REJECT}
    for role in Role:
        assert legal_transitions(Status.PUBLISHED, role, phase2) == set()
    assert legal_transitions(Status.DRAFT, Role.DEPARTMENT_MANAGER,
                             POLICIES[PolicyName.PHASE1_B]) == set()


def drive_to(wh, status, unit, month):
    if status is Status.DRAFT:
        return
    submit(wh, month=month, unit=unit)
    sudin = suboffice_for(wh.bundle, unit)
    if status is Status.SUBMITTED:
        return
    if status is Status.REJECTED:
        wh.review((DS, unit, month), ReviewAction.REJECT, sudin, reason="r")
        return
    wh.review((DS, unit, month), ReviewAction.VERIFY, sudin)
    if status is Status.VERIFIED:
        return
    wh.review((DS, unit, month), ReviewAction.VALIDATE, "u-dinkes")
    if status is Status.VALIDATED:
        return
    wh.publish((DS, unit, month), "u-dinkes")


def test_legal_transitions_agree_with_behavior_exhaustively(bundle):
    months = [f"2021-{m:02d}" for m in range(1, 13)] + [f"2022-{m:02d}" for m in range(1, 13)]
    units = bundle.tree.units_at_level(OrgLevel.SUBDISTRICT)
    for policy_name in (PolicyName.CURRENT_A, PolicyName.PHASE2_C):
        policy = POLICIES[policy_name]
        wh = Warehouse(bundle, Store(), policy)
        slot = 0
        for status in Status:
            if status is Status.DRAFT:
                continue  # absent form: review itself raises IllegalTransition
            for role in Role:
                actor = {
                    Role.ENUMERATOR_PIC: lambda u: pic_for(bundle, u),
                    Role.SUBOFFICE_MANAGER: lambda u: suboffice_for(bundle, u),
                    Role.DEPARTMENT_MANAGER: lambda u: "u-dinkes",
                    Role.ADMIN: lambda u: "u-admin",
                }[role]
                for action in ReviewAction:
                    unit = units[slot % len(units)]
                    month = months[slot // len(units) % len(months)]
                    slot += 1
                    drive_to(wh, status, unit, month)
                    expected = action in legal_transitions(status, role, policy)
                    try:
                        wh.review((DS, unit, month), action, actor(unit),
                                  reason="exhaustive check")
                        accepted = True
                    except (IllegalTransition, RoleDenied):
                        accepted = False
                    assert accepted == expected, (
                        f"{policy_name} {status} {role} {action}: "
                        f"legal_transitions says {expected}, behavior says {accepted}"
                    )


def test_draft_status_accepts_nothing(warehouse):
    for action in ReviewAction:
        for actor in ("u-admin", "u-dinkes"):
            with pytest.raises(IllegalTransition):
                warehouse.review((DS, UNIT, "2030-01"), action, actor, reason="x")


# -- monotonicity over random sequences ----------------------------------------------


def test_no_backward_move_without_reject(bundle):
    rng = random.Random(42)
    wh = Warehouse(bundle, Store())
    units = bundle.tree.units_at_level(OrgLevel.SUBDISTRICT)[:4]
    months = ["2021-01", "2021-02"]
    actions = ["submit", "VERIFY", "VALIDATE", "REJECT", "PUBLISH"]
    actors = ["u-admin", "u-dinkes", "u-sudin-jakpus", pic_for(bundle, units[0])]
    for _ in range(2000):
        unit = rng.choice(units)
        month = rng.choice(months)
        act = rng.choice(actions)
        try:
            if act == "submit":
                submit(wh, month=month, unit=unit, served=rng.randint(90, 110))
            else:
                wh.review((DS, unit, month), act, rng.choice(actors),
                          reason="random walk")
        except Exception:
            pass
    for t in wh.store.transitions:
        from_rank = t.from_status.rank if t.from_status else 0
        if t.to_status.rank < from_rank:
            assert t.action == "REJECT", f"backward move via {t.action}"


# -- non-blocking flow ----------------------------------------------------------------


def test_submission_visible_before_any_review(warehouse):
    submit(warehouse, served=77, target=100)
    engine = AnalyticsEngine(warehouse.bundle, warehouse.store.snapshot().facts)
    cell = engine.aggregate_up("el-tb-served", MONTH, "ou-dki", Status.SUBMITTED)
    assert cell is not None and cell.value == 77
    review_actions = [t for t in warehouse.store.transitions if t.action != "SUBMIT"]
    assert review_actions == []


def test_city_entry_phase1_visible_immediately(city_warehouse):
    wh = city_warehouse
    values = {"el-tb-served": 10, "el-tb-target": 20}
    wh.submit_form("ds-tb", "ou-jakut", "2021-05", values,
                   pic_for(wh.bundle, "ou-jakut"),
                   submitted_at=timely_timestamp("2021-05"))
    engine = AnalyticsEngine(wh.bundle, wh.store.snapshot().facts)
    cell = engine.aggregate_up("el-tb-served", "2021-05", "ou-dki", Status.SUBMITTED)
    assert cell.value == 10


def test_blocking_hops_per_policy():
    assert blocking_hops(POLICIES[PolicyName.CURRENT_A]) == 3
    assert blocking_hops(POLICIES[PolicyName.PHASE1_B]) == 0
    assert blocking_hops(POLICIES[PolicyName.PHASE2_C]) == 0


def test_flow_comparison_rows(bundle):
    rows = flow_comparison(bundle)
    by_name = {r["policy"]: r for r in rows}
    assert by_name["CURRENT_A"]["blocking_hops"] == 3
    assert by_name["PHASE1_B"]["blocking_hops"] == 0
    assert by_name["PHASE2_C"]["blocking_hops"] == 0
    assert flow_comparison(None) == []


# -- audit completeness ----------------------------------------------------------------


def test_every_status_change_is_logged(warehouse):
    submit(warehouse)
    verify(warehouse)
    warehouse.review((DS, UNIT, MONTH), ReviewAction.VALIDATE, "u-dinkes")
    log = [(t.from_status, t.to_status) for t in warehouse.store.transitions]
    assert log == [
        (Status.DRAFT, Status.SUBMITTED),
        (Status.SUBMITTED, Status.VERIFIED),
        (Status.VERIFIED, Status.VALIDATED),
    ]


def test_concurrent_conflicting_reviews_one_wins(warehouse):
    submit(warehouse)
    verify(warehouse)
    # the slower duplicate VERIFY sees the new status and fails the CAS
    with pytest.raises(IllegalTransition):
        verify(warehouse)


def test_threaded_reviews_exactly_one_wins(bundle):
    """Concurrent conflicting reviews on one form: exactly one VERIFY lands,
    every other attempt observes the CAS failure."""
    import threading

    wh = Warehouse(bundle, Store())
    submit(wh)
    outcomes = []
    barrier = threading.Barrier(8)

    def attempt():
        barrier.wait()
        try:
            verify(wh)
            outcomes.append("won")
        except IllegalTransition:
            outcomes.append("lost")

    threads = [threading.Thread(target=attempt) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert outcomes.count("won") == 1
    assert outcomes.count("lost") == 7
    assert wh.store.get_form(DS, UNIT, MONTH).status is Status.VERIFIED
    verifies = [t for t in wh.store.transitions if t.action == "VERIFY"]
    assert len(verifies) == 1


def test_threaded_submissions_disjoint_subjects(bundle):
    """Parallel submissions to different subjects all land under the
    single-writer commit log."""
    import threading

    wh = Warehouse(bundle, Store())
    units = bundle.tree.units_at_level(OrgLevel.SUBDISTRICT)[:8]
    errors = []

    def enter(unit):
        try:
            submit(wh, unit=unit)
        except Exception as exc:  # pragma: no cover - failure reporting
            errors.append(exc)

    threads = [threading.Thread(target=enter, args=(u,)) for u in units]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert errors == []
    assert len(wh.store.forms) == len(units)
    assert wh.store.snapshot_id == len(units)


def test_status_diffs_explained_by_logged_transitions(bundle):
    """Every status difference between two snapshots is exactly the
    composition of the transitions logged between them."""
    rng = random.Random(7)
    wh = Warehouse(bundle, Store())
    units = bundle.tree.units_at_level(OrgLevel.SUBDISTRICT)[:3]
    months = ["2021-01", "2021-02"]

    def form_statuses():
        return {key: form.status for key, form in wh.store.forms.items()}

    before = form_statuses()
    mark = len(wh.store.transitions)
    for _ in range(300):
        unit, month = rng.choice(units), rng.choice(months)
        try:
            if rng.random() < 0.4:
                submit(wh, month=month, unit=unit, served=rng.randint(90, 110))
            else:
                wh.review((DS, unit, month), rng.choice(list(ReviewAction)),
                          rng.choice(["u-admin", "u-dinkes", "u-sudin-jakpus"]),
                          reason="audit walk")
        except Exception:
            pass
    after = form_statuses()
    logged = wh.store.transitions[mark:]

    replayed = dict(before)
    for t in logged:
        key = (t.dataset_id, t.org_unit_id, t.period_key)
        expected_from = replayed.get(key, Status.DRAFT)
        assert t.from_status == expected_from, "transition chain broken"
        replayed[key] = t.to_status
    assert replayed == after
