"""Rollup and analytics over a fact snapshot.

Entry-level facts are indexed into flat columns once per engine; aggregates
walk them with the selected kernel backend. Cells for non-entry levels are
always computed, never stored.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from ..errors import (
    InvalidQuery,
    MissingDenominator,
    MissingNumerator,
    ZeroDenominator,
)
from ..model import (
    Aggregation,
    DataValue,
    MetadataBundle,
    OrgLevel,
    RANK_TO_STATUS,
    Status,
    ValueType,
)
from ..periods import Period, PeriodType, parse_period, period_children
from . import backend


@dataclass(frozen=True)
class AggregateCell:
    subject_id: str  # element or indicator id
    org_unit_id: str
    period_key: str
    value: float
    provenance: int  # count of leaf values contributing
    status_floor: Status

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "org_unit_id": self.org_unit_id,
            "period": self.period_key,
            "value": self.value,
            "provenance": self.provenance,
            "status_floor": self.status_floor.value,
        }


class QueryDim(str, Enum):
    ORG_UNIT = "ORG_UNIT"
    PERIOD = "PERIOD"
    ELEMENT = "ELEMENT"
    INDICATOR = "INDICATOR"


@dataclass
class AnalyticsQuery:
    rows: QueryDim
    columns: QueryDim
    row_members: list[str]
    column_members: list[str]
    filters: dict[QueryDim, str] = field(default_factory=dict)
    min_status: Status = Status.VERIFIED


@dataclass
class AnalyticsTable:
    rows_dim: QueryDim
    columns_dim: QueryDim
    row_keys: list[str]
    column_keys: list[str]
    cells: list[list[float | None]]
    min_status: Status
    floor_forced: bool = False

    def to_dict(self) -> dict:
        return {
            "rows": self.rows_dim.value,
            "columns": self.columns_dim.value,
            "row_keys": list(self.row_keys),
            "column_keys": list(self.column_keys),
            "cells": self.cells,
            "min_status": self.min_status.value,
            "floor_forced": self.floor_forced,
        }

    def to_csv(self) -> str:
        lines = [",".join([self.rows_dim.value.lower()] + list(self.column_keys))]
        for key, row in zip(self.row_keys, self.cells):
            lines.append(",".join([key] + [format_value(v) for v in row]))
        return "\n".join(lines) + "\n"


def format_value(v: float | None) -> str:
    if v is None:
        return ""
    if isinstance(v, int) and not isinstance(v, bool):
        return str(v)
    return repr(float(v))


class AnalyticsEngine:
    """Read-only aggregation over one snapshot of the fact store."""

    def __init__(self, bundle: MetadataBundle, facts: Mapping[tuple, DataValue]):
        self.bundle = bundle
        self.tree = bundle.tree
        self._unit_idx = {uid: i for i, uid in enumerate(self.tree.preorder)}
        self._anc_by_level = self._build_ancestor_map()
        self._columns = self._index_facts(facts)
        self._anc_cols: dict[tuple, array] = {}

    def _build_ancestor_map(self) -> dict[OrgLevel, array]:
        """For each level, the ancestor-or-self index of every unit (-1 if none)."""
        out = {}
        for level in OrgLevel:
            col = array("i", [-1]) * len(self.tree.preorder)
            for uid, i in self._unit_idx.items():
                anc = self.tree.ancestor_at_level(uid, level)
                col[i] = self._unit_idx[anc] if anc is not None else -1
            out[level] = col
        return out

    def _index_facts(self, facts: Mapping[tuple, DataValue]) -> dict[tuple, tuple]:
        grouped: dict[tuple, list] = {}
        for (eid, uid, pkey), rec in facts.items():
            if uid not in self._unit_idx:
                continue
            grouped.setdefault((eid, pkey), []).append(
                (self._unit_idx[uid], float(rec.value), rec.status.rank)
            )
        columns = {}
        for key, rows in grouped.items():
            rows.sort()  # preorder index; deterministic accumulation order
            columns[key] = (
                array("i", [r[0] for r in rows]),
                array("d", [r[1] for r in rows]),
                array("b", [r[2] for r in rows]),
            )
        return columns

    def _ancestor_column(self, eid: str, pkey: str, level: OrgLevel) -> array | None:
        key = (eid, pkey, level)
        col = self._anc_cols.get(key)
        if col is None:
            cols = self._columns.get((eid, pkey))
            if cols is None:
                return None
            units, _, _ = cols
            anc = self._anc_by_level[level]
            col = array("i", [anc[u] for u in units])
            self._anc_cols[key] = col
        return col

    # -- aggregates -----------------------------------------------------------

    def aggregate_up(
        self,
        element_id: str,
        period: Period | str,
        target_unit_id: str,
        min_status: Status = Status.VERIFIED,
    ) -> AggregateCell | None:
        """Roll entry-level facts up to the target unit for one period."""
        element = self.bundle.element(element_id)
        period = period if isinstance(period, Period) else parse_period(period)
        target = self.tree.get(target_unit_id)
        cols = self._columns.get((element_id, period.key))
        if cols is None:
            return None
        anc = self._ancestor_column(element_id, period.key, target.level)
        _, values, statuses = cols
        total, count, floor = backend.rollup_filtered(
            anc, values, statuses, self._unit_idx[target_unit_id], min_status.rank
        )
        if count == 0:
            return None
        return self._make_cell(element, target_unit_id, period.key, total, count, floor)

    def _make_cell(self, element, unit_id, pkey, total, count, floor) -> AggregateCell:
        if element.aggregation is Aggregation.AVERAGE:
            value: float = total / count
        elif element.value_type is ValueType.NON_NEGATIVE_INTEGER:
            value = int(total)
        else:
            value = total
        return AggregateCell(
            subject_id=element.id,
            org_unit_id=unit_id,
            period_key=pkey,
            value=value,
            provenance=count,
            status_floor=RANK_TO_STATUS[floor],
        )

    def aggregate_period(
        self,
        element_id: str,
        org_unit_id: str,
        coarse_period: Period | str,
        min_status: Status = Status.VERIFIED,
    ) -> AggregateCell | None:
        """Combine monthly cells into a quarter or year using the element rule."""
        element = self.bundle.element(element_id)
        period = coarse_period if isinstance(coarse_period, Period) else parse_period(coarse_period)
        if period.period_type is PeriodType.MONTH:
            raise InvalidQuery("aggregate_period expects a QUARTER or YEAR period")
        cells = [
            c for month in period_children(period)
            if (c := self.aggregate_up(element_id, month, org_unit_id, min_status)) is not None
        ]
        if not cells:
            return None
        total = sum(c.value for c in cells)
        if element.aggregation is Aggregation.AVERAGE:
            value: float = total / len(cells)
        elif element.value_type is ValueType.NON_NEGATIVE_INTEGER:
            value = int(total)
        else:
            value = float(total)
        return AggregateCell(
            subject_id=element_id,
            org_unit_id=org_unit_id,
            period_key=period.key,
            value=value,
            provenance=sum(c.provenance for c in cells),
            status_floor=RANK_TO_STATUS[min(c.status_floor.rank for c in cells)],
        )

    def aggregate(
        self,
        element_id: str,
        org_unit_id: str,
        period: Period | str,
        min_status: Status = Status.VERIFIED,
    ) -> AggregateCell | None:
        """Dispatch on period grain: months roll up the tree, coarser periods
        combine monthly cells."""
        period = period if isinstance(period, Period) else parse_period(period)
        if period.period_type is PeriodType.MONTH:
            return self.aggregate_up(element_id, period, org_unit_id, min_status)
        return self.aggregate_period(element_id, org_unit_id, period, min_status)

    def compute_indicator(
        self,
        indicator_id: str,
        org_unit_id: str,
        period: Period | str,
        min_status: Status = Status.VERIFIED,
    ) -> AggregateCell:
        """Coverage value: factor x numerator / denominator over aggregates."""
        ind = self.bundle.indicator(indicator_id)
        period = period if isinstance(period, Period) else parse_period(period)
        num = self.aggregate(ind.numerator_element_id, org_unit_id, period, min_status)
        den = self.aggregate(ind.denominator_element_id, org_unit_id, period, min_status)
        if num is None:
            raise MissingNumerator(
                f"no {ind.numerator_element_id} data for {org_unit_id} {period.key}"
            )
        if den is None:
            raise MissingDenominator(
                f"no {ind.denominator_element_id} data for {org_unit_id} {period.key}"
            )
        if den.value == 0:
            raise ZeroDenominator(
                f"denominator {ind.denominator_element_id} is zero for "
                f"{org_unit_id} {period.key}"
            )
        return AggregateCell(
            subject_id=indicator_id,
            org_unit_id=org_unit_id,
            period_key=period.key,
            value=ind.factor * num.value / den.value,
            provenance=num.provenance + den.provenance,
            status_floor=RANK_TO_STATUS[
                min(num.status_floor.rank, den.status_floor.rank)
            ],
        )

    # -- pivot queries ---------------------------------------------------------

    def analytics(self, query: AnalyticsQuery) -> AnalyticsTable:
        """Evaluate a rows x columns pivot; empty cells where no data exists."""
        self._validate_query(query)
        row_keys = self._normalize_members(query.rows, query.row_members)
        column_keys = self._normalize_members(query.columns, query.column_members)

        cells = self._grid_grouped(query, row_keys, column_keys)
        if cells is None:
            cells = []
            for rkey in row_keys:
                row: list[float | None] = []
                for ckey in column_keys:
                    coords = dict(query.filters)
                    coords[query.rows] = rkey
                    coords[query.columns] = ckey
                    row.append(self._cell_value(coords, query.min_status))
                cells.append(row)
        return AnalyticsTable(
            rows_dim=query.rows,
            columns_dim=query.columns,
            row_keys=row_keys,
            column_keys=column_keys,
            cells=cells,
            min_status=query.min_status,
        )

    def _grid_grouped(self, query, row_keys, column_keys) -> list[list[float | None]] | None:
        """Batch path: one grouped-kernel pass per period computes a whole
        ORG_UNIT axis, when the grid is unit x month for one element and all
        units sit at the same level. Cell values match aggregate_up exactly.
        """
        if {query.rows, query.columns} != {QueryDim.ORG_UNIT, QueryDim.PERIOD}:
            return None
        element_id = query.filters.get(QueryDim.ELEMENT)
        if element_id is None:
            return None
        units, periods = (row_keys, column_keys) if query.rows is QueryDim.ORG_UNIT \
            else (column_keys, row_keys)
        levels = {self.tree.get(u).level for u in units}
        if len(levels) != 1:
            return None
        if any(parse_period(p).period_type is not PeriodType.MONTH for p in periods):
            return None
        level = levels.pop()
        element = self.bundle.element(element_id)
        min_rank = query.min_status.rank
        n_groups = len(self.tree.preorder)

        by_coord: dict[tuple[str, str], float | None] = {}
        for pkey in periods:
            cols = self._columns.get((element_id, pkey))
            if cols is None:
                for u in units:
                    by_coord[(u, pkey)] = None
                continue
            anc = self._ancestor_column(element_id, pkey, level)
            _, values, statuses = cols
            sums, counts, _ = backend.rollup_grouped(
                anc, values, statuses, n_groups, min_rank
            )
            for u in units:
                g = self._unit_idx[u]
                if counts[g] == 0:
                    by_coord[(u, pkey)] = None
                elif element.aggregation is Aggregation.AVERAGE:
                    by_coord[(u, pkey)] = sums[g] / counts[g]
                elif element.value_type is ValueType.NON_NEGATIVE_INTEGER:
                    by_coord[(u, pkey)] = int(sums[g])
                else:
                    by_coord[(u, pkey)] = sums[g]

        if query.rows is QueryDim.ORG_UNIT:
            return [[by_coord[(r, c)] for c in column_keys] for r in row_keys]
        return [[by_coord[(c, r)] for c in column_keys] for r in row_keys]

    def _validate_query(self, query: AnalyticsQuery) -> None:
        if query.rows == query.columns:
            raise InvalidQuery("rows and columns must be different dimensions")
        dims = {query.rows, query.columns}
        if {QueryDim.ELEMENT, QueryDim.INDICATOR} <= dims:
            raise InvalidQuery("ELEMENT and INDICATOR cannot both be axes")
        for dim in (QueryDim.ORG_UNIT, QueryDim.PERIOD):
            if dim not in dims and dim not in query.filters:
                raise InvalidQuery(f"missing filter for {dim.value}")
        if not dims & {QueryDim.ELEMENT, QueryDim.INDICATOR}:
            if QueryDim.ELEMENT not in query.filters and QueryDim.INDICATOR not in query.filters:
                raise InvalidQuery("missing filter for ELEMENT or INDICATOR")
            if QueryDim.ELEMENT in query.filters and QueryDim.INDICATOR in query.filters:
                raise InvalidQuery("cannot filter on both ELEMENT and INDICATOR")
        if not query.row_members or not query.column_members:
            raise InvalidQuery("both axes need at least one member")

    def _normalize_members(self, dim: QueryDim, members: Iterable[str]) -> list[str]:
        members = list(dict.fromkeys(members))
        if dim is QueryDim.ORG_UNIT:
            for m in members:
                self.tree.get(m)
            return sorted(members, key=self.tree.preorder_index)
        if dim is QueryDim.PERIOD:
            return [p.key for p in sorted(parse_period(m) for m in members)]
        if dim is QueryDim.ELEMENT:
            for m in members:
                self.bundle.element(m)
        else:
            for m in members:
                self.bundle.indicator(m)
        return sorted(members)

    def _cell_value(self, coords: dict[QueryDim, str], min_status: Status) -> float | None:
        unit = coords[QueryDim.ORG_UNIT]
        period = coords[QueryDim.PERIOD]
        if QueryDim.INDICATOR in coords:
            try:
                return self.compute_indicator(
                    coords[QueryDim.INDICATOR], unit, period, min_status
                ).value
            except (MissingNumerator, MissingDenominator, ZeroDenominator):
                return None
        cell = self.aggregate(coords[QueryDim.ELEMENT], unit, period, min_status)
        return None if cell is None else cell.value
