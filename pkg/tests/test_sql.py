from __future__ import annotations

import random

import pytest

from chainplan.dates import epoch_days, parse_iso_date
from chainplan.errors import (
    QueryTypeError,
    ResolutionError,
    SqlSyntaxError,
    UnsupportedConstructError,
)
from chainplan.sql import (
    Aggregate,
    ColumnRef,
    OrderKey,
    Predicate,
    Projection,
    QueryEnv,
    QueryPlan,
    SysDate,
    execute_query,
    parse_query,
    render_sql,
)
from chainplan.table import Catalog, Column, Table

from conftest import make_table
from generators import random_query, random_table
from reference_sql import run_reference, typed_rows

PAPER_QUERY = (
    "SELECT year, month, SUM(sales) AS total_sales, SUM(pv) AS total_pv, "
    "SUM(user_cnt) AS total_users FROM sales "
    "WHERE dept_id = 'Computer' AND order_date >= sysdate(-730) "
    "GROUP BY year, month"
)


def env_for(table, reference_date="2024-10-15"):
    cat = Catalog()
    cat.register(table)
    return QueryEnv(reference_date=parse_iso_date(reference_date), catalog=cat)


# --- parsing -----------------------------------------------------------------

def test_flagship_query_shape():
    plan = parse_query(PAPER_QUERY)
    assert plan.group_by == ("year", "month")
    aggs = [p for p in plan.projections if isinstance(p.expr, Aggregate)]
    assert [(a.expr.fn, a.expr.arg) for a in aggs] == [
        ("SUM", "sales"), ("SUM", "pv"), ("SUM", "user_cnt"),
    ]
    assert len(plan.predicates) == 2
    assert plan.predicates[0] == Predicate("dept_id", "=", "Computer")
    assert plan.predicates[1] == Predicate("order_date", ">=", SysDate(-730))


def test_plain_select():
    plan = parse_query("SELECT a FROM t")
    assert plan == QueryPlan(
        projections=(Projection(ColumnRef("a")),), source="t"
    )
    assert not plan.is_grouped


def test_join_is_named_unsupported():
    with pytest.raises(UnsupportedConstructError) as exc:
        parse_query("SELECT a FROM t JOIN u ON t.x = u.x")
    assert exc.value.token == "JOIN"


@pytest.mark.parametrize("text,token", [
    ("SELECT a FROM t WHERE a = 1 OR b = 2", "OR"),
    ("SELECT DISTINCT a FROM t", "DISTINCT"),
    ("SELECT a FROM t WHERE a IN (1, 2)", "IN"),
    ("SELECT a FROM t WHERE a LIKE 'x%'", "LIKE"),
    ("SELECT a FROM t WHERE NOT a = 1", "NOT"),
    ("SELECT a FROM t GROUP BY a HAVING SUM(b) > 1", "HAVING"),
    ("SELECT a FROM t UNION SELECT a FROM u", "UNION"),
    ("SELECT a FROM t LIMIT 5 OFFSET 2", "OFFSET"),
    ("DELETE FROM t", "DELETE"),
])
def test_known_constructs_rejected_by_name(text, token):
    with pytest.raises(UnsupportedConstructError) as exc:
        parse_query(text)
    assert exc.value.token == token


def test_projection_arithmetic_rejected():
    with pytest.raises(UnsupportedConstructError):
        parse_query("SELECT a + b FROM t")


def test_syntax_error_carries_position():
    with pytest.raises(SqlSyntaxError) as exc:
        parse_query("SELECT FROM t")
    assert "position" in str(exc.value)


def test_negative_limit_rejected():
    with pytest.raises(SqlSyntaxError):
        parse_query("SELECT a FROM t LIMIT -1")


def test_string_escape_round_trip():
    plan = parse_query("SELECT a FROM t WHERE a = 'it''s'")
    assert plan.predicates[0].value == "it's"
    assert parse_query(render_sql(plan)) == plan


def test_keyword_case_and_whitespace_tolerated():
    a = parse_query("select a,   b from t where a >= 1   group by a, b")
    b = parse_query("SELECT a, b FROM t WHERE a >= 1 GROUP BY a, b")
    assert a == b


def test_trailing_semicolon_ok():
    assert parse_query("SELECT a FROM t;") == parse_query("SELECT a FROM t")


def test_canonical_render():
    plan = parse_query(
        "select a, sum(b) as x from t where c = 1 and d >= sysdate(-730) "
        "group by a order by a asc limit 5"
    )
    assert render_sql(plan) == (
        "SELECT a, SUM(b) AS x FROM t WHERE c = 1 AND d >= sysdate(-730) "
        "GROUP BY a ORDER BY a ASC LIMIT 5"
    )


def test_mixed_projection_needs_group_key():
    with pytest.raises(ValueError) as exc:
        QueryPlan(
            projections=(
                Projection(ColumnRef("a")),
                Projection(Aggregate("SUM", "b")),
            ),
            source="t",
        )
    assert "GROUP BY" in str(exc.value)
    with pytest.raises(SqlSyntaxError):
        parse_query("SELECT a, SUM(b) FROM t")


# --- execution: the worked four-row fixture ----------------------------------

def test_flagship_query_on_fixture(sales_fixture):
    env = env_for(sales_fixture)
    result = execute_query(parse_query(PAPER_QUERY), env)
    assert result.column_names == (
        "year", "month", "total_sales", "total_pv", "total_users"
    )
    assert result.rows == ((2023, 11, 100, 1000, 50), (2023, 10, 55, 500, 28))


def test_empty_table_keeps_projected_schema():
    t = make_table("t", [("a", "int"), ("b", "string")], [])
    env = env_for(t)
    plain = execute_query(parse_query("SELECT b, a FROM t"), env)
    assert plain.column_names == ("b", "a")
    assert plain.rows == ()
    grouped = execute_query(
        parse_query("SELECT a, COUNT(*) AS n FROM t GROUP BY a"), env
    )
    assert grouped.column_names == ("a", "n")
    assert grouped.rows == ()


def test_whole_table_aggregation_of_empty_input_has_zero_rows():
    t = make_table("t", [("a", "int")], [])
    result = execute_query(parse_query("SELECT COUNT(*) FROM t"), env_for(t))
    assert result.rows == ()


def test_sysdate_boundary_inclusive():
    t = make_table("t", [("x", "date")], [(parse_iso_date("2024-11-01"),)])
    env = env_for(t, reference_date="2024-11-01")
    result = execute_query(parse_query("SELECT x FROM t WHERE x >= sysdate(0)"), env)
    assert len(result.rows) == 1


def test_null_fails_every_predicate():
    t = make_table("t", [("a", "int")], [(None,), (1,)])
    env = env_for(t)
    for op in ("=", "!=", "<", "<=", ">", ">="):
        result = execute_query(parse_query(f"SELECT a FROM t WHERE a {op} 1"), env)
        assert all(r[0] is not None for r in result.rows)


def test_count_star_vs_count_column():
    t = make_table("t", [("a", "int")], [(1,), (None,), (2,)])
    result = execute_query(
        parse_query("SELECT COUNT(*) AS stars, COUNT(a) AS cells FROM t"),
        env_for(t),
    )
    assert result.rows == ((3, 2),)


def test_aggregates_skip_nulls_and_empty_is_null():
    t = make_table("t", [("k", "int"), ("v", "int")],
                   [(1, 10), (1, None), (2, None)])
    result = execute_query(
        parse_query(
            "SELECT k, SUM(v) AS s, AVG(v) AS m, MIN(v) AS lo, MAX(v) AS hi "
            "FROM t GROUP BY k"
        ),
        env_for(t),
    )
    assert result.rows == ((1, 10, 10.0, 10, 10), (2, None, None, None, None))


def test_avg_is_float_count_is_int():
    t = make_table("t", [("v", "int")], [(1,), (2,)])
    result = execute_query(
        parse_query("SELECT AVG(v) AS m, COUNT(*) AS n FROM t"), env_for(t)
    )
    assert result.schema == {"m": "float", "n": "int"}
    assert result.rows == ((1.5, 2),)


def test_group_order_is_first_seen():
    t = make_table("t", [("k", "string")], [("b",), ("a",), ("b",), ("c",)])
    result = execute_query(
        parse_query("SELECT k, COUNT(*) AS n FROM t GROUP BY k"), env_for(t)
    )
    assert [r[0] for r in result.rows] == ["b", "a", "c"]


def test_order_by_nulls_last_and_stable():
    t = make_table("t", [("a", "int"), ("tag", "string")],
                   [(2, "x"), (None, "y"), (1, "z"), (2, "w")])
    result = execute_query(
        parse_query("SELECT a, tag FROM t ORDER BY a ASC"), env_for(t)
    )
    assert result.rows == ((1, "z"), (2, "x"), (2, "w"), (None, "y"))
    result = execute_query(
        parse_query("SELECT a, tag FROM t ORDER BY a DESC"), env_for(t)
    )
    assert result.rows == ((2, "x"), (2, "w"), (1, "z"), (None, "y"))


def test_limit_applies_after_sort():
    t = make_table("t", [("a", "int")], [(3,), (1,), (2,)])
    result = execute_query(
        parse_query("SELECT a FROM t ORDER BY a ASC LIMIT 2"), env_for(t)
    )
    assert result.rows == ((1,), (2,))


def test_limit_zero():
    t = make_table("t", [("a", "int")], [(1,)])
    result = execute_query(parse_query("SELECT a FROM t LIMIT 0"), env_for(t))
    assert result.rows == ()


def test_order_by_unprojected_source_column():
    t = make_table("t", [("a", "int"), ("b", "int")], [(1, 9), (2, 3)])
    result = execute_query(
        parse_query("SELECT a FROM t ORDER BY b ASC"), env_for(t)
    )
    assert result.rows == ((2,), (1,))


def test_date_literal_string_coerces():
    t = make_table("t", [("d", "date")],
                   [(parse_iso_date("2023-11-01"),), (parse_iso_date("2023-01-01"),)])
    result = execute_query(
        parse_query("SELECT d FROM t WHERE d >= '2023-06-01'"), env_for(t)
    )
    assert len(result.rows) == 1


# --- execution errors ---------------------------------------------------------

def test_unknown_table():
    env = env_for(make_table("t", [("a", "int")], []))
    with pytest.raises(ResolutionError):
        execute_query(parse_query("SELECT a FROM missing"), env)


def test_unknown_column():
    env = env_for(make_table("t", [("a", "int")], []))
    with pytest.raises(ResolutionError):
        execute_query(parse_query("SELECT zz FROM t"), env)


def test_sum_over_string_rejected():
    t = make_table("t", [("s", "string")], [("x",)])
    with pytest.raises(QueryTypeError) as exc:
        execute_query(parse_query("SELECT SUM(s) FROM t"), env_for(t))
    assert "non-numeric" in str(exc.value)


def test_sysdate_against_non_date_rejected():
    t = make_table("t", [("a", "int")], [(1,)])
    with pytest.raises(QueryTypeError):
        execute_query(parse_query("SELECT a FROM t WHERE a >= sysdate(0)"), env_for(t))


def test_duplicate_output_names_rejected():
    t = make_table("t", [("a", "int")], [(1,)])
    with pytest.raises(QueryTypeError):
        execute_query(parse_query("SELECT a, a FROM t"), env_for(t))


def test_grouped_order_by_must_use_output_column():
    t = make_table("t", [("k", "int"), ("v", "int")], [(1, 2)])
    with pytest.raises(ResolutionError) as exc:
        execute_query(
            parse_query("SELECT k, SUM(v) AS s FROM t GROUP BY k ORDER BY v ASC"),
            env_for(t),
        )
    assert "output column" in str(exc.value)


def test_type_mismatched_literal_rejected():
    t = make_table("t", [("a", "int")], [(1,)])
    with pytest.raises(QueryTypeError):
        execute_query(parse_query("SELECT a FROM t WHERE a = 'word'"), env_for(t))


# --- properties over random draws ---------------------------------------------

def test_parse_render_idempotent_random():
    for i in range(200):
        rng = random.Random(61_000 + i)
        table = random_table(rng)
        ref = epoch_days(2024, 1, 1) + rng.randint(-200, 200)
        plan = random_query(rng, table, ref)
        text = render_sql(plan)
        again = parse_query(text)
        assert again == plan, text
        assert render_sql(again) == text


def test_engine_matches_reference_random():
    for i in range(250):
        rng = random.Random(62_000 + i)
        table = random_table(rng)
        cat = Catalog()
        cat.register(table)
        env = QueryEnv(
            reference_date=epoch_days(2024, 1, 1) + rng.randint(-200, 200),
            catalog=cat,
        )
        plan = random_query(rng, table, env.reference_date)
        got = execute_query(plan, env)
        names, rows = run_reference(plan, env)
        assert list(got.column_names) == names, render_sql(plan)
        assert typed_rows(got.rows) == typed_rows(rows), render_sql(plan)


def test_filter_never_invents_rows():
    for i in range(100):
        rng = random.Random(63_000 + i)
        table = random_table(rng, min_rows=1)
        cat = Catalog()
        cat.register(table)
        env = QueryEnv(reference_date=epoch_days(2024, 1, 1), catalog=cat)
        plan = random_query(rng, table, env.reference_date)
        if plan.is_grouped or plan.order_by or plan.limit is not None:
            continue
        result = execute_query(plan, env)
        assert len(result.rows) <= len(table.rows)
        source_rows = set(table.rows)
        idx = [table.column_index(p.expr.name) for p in plan.projections]
        projected = {tuple(r[i] for i in idx) for r in table.rows}
        for row in result.rows:
            assert row in projected


def test_grouped_one_row_per_key():
    for i in range(100):
        rng = random.Random(64_000 + i)
        table = random_table(rng, min_rows=1)
        cat = Catalog()
        cat.register(table)
        env = QueryEnv(reference_date=epoch_days(2024, 1, 1), catalog=cat)
        plan = random_query(rng, table, env.reference_date)
        if not plan.group_by or plan.limit is not None:
            continue
        result = execute_query(plan, env)
        key_idx = [
            i for i, p in enumerate(plan.projections)
            if isinstance(p.expr, ColumnRef)
        ]
        keys = [tuple(r[i] for i in key_idx) for r in result.rows]
        assert len(keys) == len(set(keys))
