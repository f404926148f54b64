"""Reporting periods: Gregorian months, quarters, and years.

Canonical keys are ``YYYY-MM`` (month), ``YYYY-Qn`` (quarter) and ``YYYY``
(year). Keys round-trip through :func:`parse_period`, and a month nests in
exactly one quarter and one year.
"""

from __future__ import annotations

import calendar
import re
from dataclasses import dataclass
from datetime import date
from enum import Enum

from .errors import MalformedPeriodKey, PeriodTypeMismatch

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")
_QUARTER_RE = re.compile(r"^(\d{4})-Q([1-4])$")
_YEAR_RE = re.compile(r"^(\d{4})$")


class PeriodType(str, Enum):
    MONTH = "MONTH"
    QUARTER = "QUARTER"
    YEAR = "YEAR"


@dataclass(frozen=True)
class Period:
    """One reporting period, identified by its canonical text key."""

    period_type: PeriodType
    key: str

    @property
    def year(self) -> int:
        return int(self.key[:4])

    @property
    def month(self) -> int | None:
        return int(self.key[5:7]) if self.period_type is PeriodType.MONTH else None

    @property
    def start(self) -> date:
        if self.period_type is PeriodType.MONTH:
            return date(self.year, int(self.key[5:7]), 1)
        if self.period_type is PeriodType.QUARTER:
            return date(self.year, (int(self.key[6]) - 1) * 3 + 1, 1)
        return date(self.year, 1, 1)

    @property
    def end(self) -> date:
        """Last calendar day covered by the period."""
        if self.period_type is PeriodType.MONTH:
            y, m = self.year, int(self.key[5:7])
            return date(y, m, calendar.monthrange(y, m)[1])
        if self.period_type is PeriodType.QUARTER:
            y, m = self.year, int(self.key[6]) * 3
            return date(y, m, calendar.monthrange(y, m)[1])
        return date(self.year, 12, 31)

    @property
    def sort_key(self) -> tuple:
        return (self.start, self.period_type.value, self.key)

    def __lt__(self, other: "Period") -> bool:
        return self.sort_key < other.sort_key

    def __str__(self) -> str:
        return self.key


def parse_period(key: str) -> Period:
    """Parse a canonical period key; raises MalformedPeriodKey otherwise."""
    if not isinstance(key, str):
        raise MalformedPeriodKey(f"period key must be text, got {type(key).__name__}")
    if _MONTH_RE.match(key):
        if not 1 <= int(key[5:7]) <= 12:
            raise MalformedPeriodKey(f"month out of range in {key!r}")
        return Period(PeriodType.MONTH, key)
    if _QUARTER_RE.match(key):
        return Period(PeriodType.QUARTER, key)
    if _YEAR_RE.match(key):
        return Period(PeriodType.YEAR, key)
    raise MalformedPeriodKey(f"unrecognized period key {key!r}")


def month_period(year: int, month: int) -> Period:
    return Period(PeriodType.MONTH, f"{year:04d}-{month:02d}")


def period_children(period: Period) -> list[Period]:
    """Constituent months: 12 for a year, 3 for a quarter, none for a month."""
    if period.period_type is PeriodType.YEAR:
        return [month_period(period.year, m) for m in range(1, 13)]
    if period.period_type is PeriodType.QUARTER:
        q = int(period.key[6])
        return [month_period(period.year, m) for m in range((q - 1) * 3 + 1, q * 3 + 1)]
    return []


def parent_quarter(month: Period) -> Period:
    if month.period_type is not PeriodType.MONTH:
        raise PeriodTypeMismatch(f"expected a MONTH period, got {month.key}")
    q = (int(month.key[5:7]) - 1) // 3 + 1
    return Period(PeriodType.QUARTER, f"{month.year:04d}-Q{q}")


def parent_year(month: Period) -> Period:
    if month.period_type is not PeriodType.MONTH:
        raise PeriodTypeMismatch(f"expected a MONTH period, got {month.key}")
    return Period(PeriodType.YEAR, f"{month.year:04d}")


def month_range(from_key: str, to_key: str) -> list[Period]:
    """Inclusive chronological list of months between two month keys."""
    a, b = parse_period(from_key), parse_period(to_key)
    if a.period_type is not PeriodType.MONTH or b.period_type is not PeriodType.MONTH:
        raise PeriodTypeMismatch("month_range expects MONTH keys")
    out = []
    y, m = a.year, int(a.key[5:7])
    while (y, m) <= (b.year, int(b.key[5:7])):
        out.append(month_period(y, m))
        m += 1
        if m == 13:
            y, m = y + 1, 1
    return out
