"""Calendar helpers: epoch-day dates and year-month periods.

Dates are carried through tables as integer days since 1970-01-01 and
serialized as ISO-8601. Periods are (year, month) pairs used by sales
series and plans.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date, timedelta

_EPOCH = date(1970, 1, 1)
_ISO_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


def parse_iso_date(text: str) -> int:
    """Parse an ISO-8601 date string into epoch days."""
    if not _ISO_RE.match(text.strip()):
        raise ValueError(f"not an ISO-8601 date: {text!r}")
    d = date.fromisoformat(text.strip())
    return (d - _EPOCH).days


def format_iso_date(days: int) -> str:
    return (_EPOCH + timedelta(days=days)).isoformat()


def date_year(days: int) -> int:
    return (_EPOCH + timedelta(days=days)).year


def date_month(days: int) -> int:
    return (_EPOCH + timedelta(days=days)).month


def epoch_days(year: int, month: int, day: int) -> int:
    return (date(year, month, day) - _EPOCH).days


@dataclass(frozen=True, order=True)
class Period:
    """A calendar year-month, ordered chronologically."""

    year: int
    month: int

    def __post_init__(self) -> None:
        if not 1 <= self.month <= 12:
            raise ValueError(f"month out of range: {self.month}")

    def plus(self, months: int) -> Period:
        total = self.year * 12 + (self.month - 1) + months
        return Period(total // 12, total % 12 + 1)

    def index(self) -> int:
        """Absolute month index, for gap checks between periods."""
        return self.year * 12 + (self.month - 1)

    def first_day(self) -> int:
        """Epoch days of the first day of the month."""
        return epoch_days(self.year, self.month, 1)

    @staticmethod
    def parse(text: str) -> Period:
        m = re.match(r"^(\d{4})-(\d{2})$", text.strip())
        if not m:
            raise ValueError(f"not a YYYY-MM period: {text!r}")
        return Period(int(m.group(1)), int(m.group(2)))

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"
