from __future__ import annotations

import random

import pytest

from chainplan.dates import (
    Period,
    date_month,
    date_year,
    epoch_days,
    format_iso_date,
    parse_iso_date,
)


def test_parse_format_round_trip():
    for text in ("1970-01-01", "2024-02-29", "2023-11-15", "1999-12-31"):
        assert format_iso_date(parse_iso_date(text)) == text


def test_epoch_origin():
    assert parse_iso_date("1970-01-01") == 0
    assert parse_iso_date("1970-01-02") == 1


def test_random_round_trip():
    rng = random.Random(7)
    for _ in range(500):
        days = rng.randint(-3650, 40000)
        assert parse_iso_date(format_iso_date(days)) == days


def test_components():
    days = parse_iso_date("2023-11-15")
    assert date_year(days) == 2023
    assert date_month(days) == 11
    assert epoch_days(2023, 11, 15) == days


@pytest.mark.parametrize("bad", ["2023-13-01", "2023-00-10", "2023-02-30",
                                 "not a date", "2023/11/15", "20231115", ""])
def test_parse_rejects(bad):
    with pytest.raises(ValueError):
        parse_iso_date(bad)


def test_period_parse_and_str():
    p = Period.parse("2024-11")
    assert (p.year, p.month) == (2024, 11)
    assert str(p) == "2024-11"


def test_period_parse_rejects():
    for bad in ("2024-13", "2024", "2024-00", "nope", "2024-1"):
        with pytest.raises(ValueError):
            Period.parse(bad)


def test_period_plus_wraps_year():
    assert Period(2024, 11).plus(1) == Period(2024, 12)
    assert Period(2024, 11).plus(2) == Period(2025, 1)
    assert Period(2024, 1).plus(-1) == Period(2023, 12)
    assert Period(2024, 6).plus(25) == Period(2026, 7)


def test_period_ordering_and_index():
    assert Period(2023, 12) < Period(2024, 1)
    assert Period(2024, 1).index() - Period(2023, 12).index() == 1


def test_period_first_day():
    assert Period(2024, 11).first_day() == parse_iso_date("2024-11-01")


def test_period_month_bounds():
    with pytest.raises(ValueError):
        Period(2024, 13)
    with pytest.raises(ValueError):
        Period(2024, 0)
