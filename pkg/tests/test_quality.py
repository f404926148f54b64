import statistics
from datetime import datetime, timezone

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from spmdw.errors import ForeignElement, PeriodTypeMismatch
from spmdw.fixtures import build_fixture, fill_store, timely_timestamp
from spmdw.model import Aggregation, DataElement, DataSet, ValueType
from spmdw.periods import PeriodType, parse_period
from spmdw.quality import (
    Dimension,
    ElementHistory,
    RuleStatus,
    Severity,
    Timeliness,
    check_complete,
    check_consistent,
    check_correct,
    check_current,
    cross_element_rules,
    quality_scorecard,
    rule_statuses,
)


def int_element(rng=None):
    return DataElement("el-int", "Count", ValueType.NON_NEGATIVE_INTEGER, "prog", range=rng)


def pct_element():
    return DataElement("el-pct", "Share", ValueType.PERCENT, "prog")


def dec_element(rng=None):
    return DataElement("el-dec", "Measure", ValueType.DECIMAL, "prog",
                       aggregation=Aggregation.AVERAGE, range=rng)


def hist(*values):
    return ElementHistory("el", "ou-x", tuple(
        (f"2021-{i + 1:02d}", v) for i, v in enumerate(values)
    ))


# -- correct ---------------------------------------------------------------------


def test_non_integer_blocked():
    findings = check_correct(7.5, int_element())
    assert len(findings) == 1
    assert findings[0].dimension is Dimension.CORRECT
    assert findings[0].severity is Severity.BLOCK


def test_percent_out_of_default_range_blocked():
    findings = check_correct(150, pct_element())
    assert len(findings) == 1
    assert "range" in findings[0].message


def test_in_range_integer_clean():
    assert check_correct(42, int_element((0, 1000))) == []


def test_negative_integer_blocked():
    assert len(check_correct(-3, int_element())) == 1


def test_non_numeric_blocked():
    assert len(check_correct(float("nan"), dec_element())) == 1
    assert len(check_correct("12", int_element())) == 1
    assert len(check_correct(True, int_element())) == 1


@given(
    st.integers(min_value=-50, max_value=1050),
    st.integers(min_value=0, max_value=100),
    st.integers(min_value=0, max_value=100),
)
def test_widening_range_never_adds_findings(value, lo_shrink, hi_grow):
    narrow = check_correct(value, int_element((0, 1000)))
    wide = check_correct(value, int_element((0 - lo_shrink, 1000 + hi_grow)))
    assert len(wide) <= len(narrow)
    if not narrow:
        assert not wide


# -- complete --------------------------------------------------------------------


def ten_element_dataset():
    return DataSet(
        "ds-ten", "Ten elements", PeriodType.MONTH,
        tuple(f"e{i}" for i in range(10)), entry_level=4, deadline_days=5,
        program_id="prog",
    )


def test_nine_of_ten_incomplete():
    ds = ten_element_dataset()
    entered = {f"e{i}": 1 for i in range(9)}
    ratio, findings = check_complete(ds, entered, "ou-x", "2021-01")
    assert ratio == pytest.approx(0.9)
    assert len(findings) == 1
    assert findings[0].severity is Severity.BLOCK
    assert "e9" in findings[0].message


def test_full_form_complete():
    ds = ten_element_dataset()
    ratio, findings = check_complete(ds, {f"e{i}": 1 for i in range(10)}, "ou-x", "2021-01")
    assert ratio == 1.0 and findings == []


def test_foreign_element_raises():
    ds = ten_element_dataset()
    with pytest.raises(ForeignElement):
        check_complete(ds, {"stranger": 1}, "ou-x", "2021-01")


@given(st.integers(min_value=0, max_value=10))
def test_ratio_bounds_and_iff(n_entered):
    ds = ten_element_dataset()
    entered = {f"e{i}": 1 for i in range(n_entered)}
    ratio, findings = check_complete(ds, entered, "ou-x", "2021-01")
    assert 0.0 <= ratio <= 1.0
    complete_findings = [f for f in findings if f.dimension is Dimension.COMPLETE]
    assert (ratio == 1.0) == (not complete_findings)


# -- current ---------------------------------------------------------------------


def ts(s):
    return datetime.fromisoformat(s).replace(tzinfo=timezone.utc)


def test_timely_submission_clean():
    ds = ten_element_dataset()  # deadline_days=5
    assert check_current(ds, parse_period("2021-03"), ts("2021-04-03T12:00:00")) is None


def test_late_submission_flagged():
    ds = ten_element_dataset()
    finding = check_current(ds, parse_period("2021-03"), ts("2021-04-10T08:00:00"))
    assert finding is not None
    assert finding.severity is Severity.FLAG
    assert "LATE" in finding.message


def test_deadline_boundary_inclusive():
    ds = ten_element_dataset()
    assert check_current(ds, parse_period("2021-03"), ts("2021-04-05T23:59:00")) is None


def test_period_type_mismatch():
    ds = ten_element_dataset()
    with pytest.raises(PeriodTypeMismatch):
        check_current(ds, parse_period("2021"), ts("2021-04-03T12:00:00"))


# -- consistent --------------------------------------------------------------------


def test_large_deviation_flagged():
    history = hist(100, 98, 102)
    # oracle: direct arithmetic on the definition
    mean = statistics.mean([100, 98, 102])
    s = statistics.stdev([100, 98, 102])
    assert mean == 100 and s == 2.0
    assert abs(200 - mean) > 3 * s
    finding = check_consistent(200, int_element(), history, k_sigma=3)
    assert finding is not None
    assert finding.requires_justification is True


def test_small_deviation_clean():
    history = hist(100, 98, 102)
    assert abs(101 - 100) < 3 * statistics.stdev([100, 98, 102])
    assert check_consistent(101, int_element(), history, k_sigma=3) is None


def test_empty_history_never_flags():
    assert check_consistent(5, int_element(), hist(), k_sigma=3) is None


def test_cold_start_two_points():
    # fewer than 3 points: flag only when >100% away from every point
    assert check_consistent(500, int_element(), hist(100, 110), k_sigma=3) is not None
    assert check_consistent(150, int_element(), hist(100, 110), k_sigma=3) is None


def test_flat_history_uses_cold_start_rule():
    flat = hist(100, 100, 100, 100)
    assert check_consistent(100, int_element(), flat, k_sigma=3) is None
    assert check_consistent(150, int_element(), flat, k_sigma=3) is None  # within 100%
    assert check_consistent(300, int_element(), flat, k_sigma=3) is not None


def test_zero_history_cold_start():
    assert check_consistent(0, int_element(), hist(0, 0), k_sigma=3) is None
    assert check_consistent(4, int_element(), hist(0, 0), k_sigma=3) is not None


@given(
    st.lists(st.integers(min_value=1, max_value=1000), min_size=3, max_size=8),
    st.integers(min_value=1, max_value=2000),
    st.sampled_from([0.5, 2.0, 10.0, 1000.0]),
)
@settings(max_examples=120)
def test_scale_invariance(history_values, value, scale):
    """Multiplying value and history by a positive constant keeps the outcome."""
    history = hist(*history_values)
    mean = statistics.mean(history_values)
    s = statistics.stdev(history_values)
    # stay away from the flag boundary where float rounding could flip
    if s > 0:
        assume(abs(abs(value - mean) - 3 * s) > 1e-6 * max(1.0, mean))
    else:
        assume(all(abs(abs(value - h) - abs(h)) > 1e-6 * max(1.0, abs(h))
                   for h in history_values))
    base = check_consistent(value, dec_element(), history, k_sigma=3)
    scaled_history = hist(*[v * scale for v in history_values])
    scaled = check_consistent(value * scale, dec_element(), scaled_history, k_sigma=3)
    assert (base is None) == (scaled is None)


# -- cross-element rules -------------------------------------------------------------


def test_rule_satisfied():
    assert cross_element_rules({"served": 80, "target": 100}, [("served", "target")]) == []


def test_rule_violated():
    findings = cross_element_rules({"served": 120, "target": 100}, [("served", "target")])
    assert len(findings) == 1
    assert findings[0].dimension is Dimension.CONSISTENT
    assert findings[0].severity is Severity.FLAG


def test_rule_skipped_when_operand_missing():
    values = {"served": 120}
    assert cross_element_rules(values, [("served", "target")]) == []
    statuses = rule_statuses(values, [("served", "target")])
    assert statuses[0][1] is RuleStatus.UNEVALUATED


# -- scorecard ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def scored():
    from spmdw.store import Store
    from spmdw.workflow import Warehouse

    bundle = build_fixture()
    wh = Warehouse(bundle, Store())
    fill_store(wh, ["2021-01"], datasets=["ds-maternal"], upto_status="SUBMITTED")
    return wh


def test_scorecard_compliant_rows(scored):
    ds = scored.bundle.dataset("ds-maternal")
    rows = quality_scorecard(
        scored.store, scored.bundle, ds, "ou-jakpus", parse_period("2021-01")
    )
    assert len(rows) == 8  # 2 districts x 4 subdistricts under one city
    for row in rows:
        assert row.timeliness is Timeliness.OK
        assert row.completeness == 1.0
        assert row.correct_violations == 0
        assert row.rules_violated == 0


def test_scorecard_empty_period_is_missing(scored):
    ds = scored.bundle.dataset("ds-maternal")
    rows = quality_scorecard(
        scored.store, scored.bundle, ds, "ou-jakpus", parse_period("2020-01")
    )
    assert all(r.timeliness is Timeliness.MISSING for r in rows)
    assert all(r.completeness == 0.0 for r in rows)


def test_scorecard_partial_form_via_import(scored):
    """A partially imported form shows its completeness ratio."""
    from spmdw.store import Store, import_values
    from spmdw.workflow import Warehouse

    bundle = scored.bundle
    wh = Warehouse(bundle, Store())
    ds = bundle.dataset("ds-tb")
    unit = bundle.tree.units_at_level(ds.entry_level)[0]
    rows_csv = (
        "element_id,org_unit_id,period,value,status,version,updated_at,entered_by,justification\n"
        f"el-tb-served,{unit},2021-01,10,SUBMITTED,1,2021-02-02T09:00:00+00:00,u-x,\n"
    )
    report = import_values(wh.store, bundle, rows_csv)
    assert report.applied == 1
    rows = quality_scorecard(wh.store, bundle, ds, unit, parse_period("2021-01"))
    assert len(rows) == 1
    assert rows[0].completeness == pytest.approx(0.5)
    assert rows[0].rules_unevaluated == 1  # served present, target missing


def test_late_submission_shows_on_scorecard(bundle):
    from spmdw.store import Store
    from spmdw.workflow import Warehouse
    from spmdw.fixtures import form_values, pic_for
    import random

    wh = Warehouse(bundle, Store())
    ds = bundle.dataset("ds-hiv")
    unit = bundle.tree.units_at_level(ds.entry_level)[0]
    values = form_values(bundle, ds.id, 0, 0, random.Random(0))
    late_at = timely_timestamp("2021-01").replace(month=3)
    result = wh.submit_form(ds.id, unit, "2021-01", values, pic_for(bundle, unit),
                            submitted_at=late_at)
    assert any(f.dimension is Dimension.CURRENT for f in result.findings)
    rows = quality_scorecard(wh.store, bundle, ds, unit, parse_period("2021-01"))
    assert rows[0].timeliness is Timeliness.LATE
