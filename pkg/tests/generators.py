"""Seeded random builders for tables, queries, pipelines, and turns.

Everything takes an explicit random.Random so failures replay exactly.
"""

from __future__ import annotations

import random

from chainplan.dates import epoch_days, format_iso_date
from chainplan.expr import Binary, Call, Col, Lit, Unary
from chainplan.gateway import Turn
from chainplan.pipeline import (
    AggSpec,
    FilterStep,
    GroupbyStep,
    Pipeline,
    SortKey,
    SortStep,
    TransformStep,
)
from chainplan.sql import (
    Aggregate,
    ColumnRef,
    OrderKey,
    Predicate,
    Projection,
    QueryPlan,
    SysDate,
)
from chainplan.table import Column, Table

_COLUMN_POOL = (
    ("year", "int"),
    ("month", "int"),
    ("qty", "int"),
    ("sales", "float"),
    ("price", "float"),
    ("score", "float"),
    ("dept_id", "string"),
    ("region", "string"),
    ("order_date", "date"),
    ("ship_date", "date"),
    ("flag", "bool"),
    ("active", "bool"),
)

_STRINGS = ("Computer", "Grocery", "Apparel", "north", "south", "east")
_ALIASES = ("total", "k", "v", "out1", "metric", "m2", "acc")

_DATE_LO = epoch_days(2023, 1, 1)
_DATE_HI = epoch_days(2024, 12, 31)


def _cell(rng: random.Random, name: str, col_type: str):
    if rng.random() < 0.10:
        return None
    if col_type == "int":
        if name == "year":
            return rng.randint(2021, 2025)
        if name == "month":
            return rng.randint(1, 12)
        return rng.randint(-20, 120)
    if col_type == "float":
        return round(rng.uniform(-50.0, 500.0), 2)
    if col_type == "string":
        return rng.choice(_STRINGS)
    if col_type == "date":
        return rng.randint(_DATE_LO, _DATE_HI)
    return rng.random() < 0.5


def random_table(rng: random.Random, name: str = "t",
                 min_rows: int = 0, max_rows: int = 100) -> Table:
    width = rng.randint(2, 6)
    cols = rng.sample(_COLUMN_POOL, width)
    n = rng.randint(min_rows, max_rows)
    rows = tuple(
        tuple(_cell(rng, cn, ct) for cn, ct in cols) for _ in range(n)
    )
    return Table(name=name, columns=tuple(Column(c, t) for c, t in cols),
                 rows=rows)


def _pred_literal(rng: random.Random, table: Table, name: str, col_type: str,
                  reference_date: int):
    non_null = [r[table.column_index(name)] for r in table.rows
                if r[table.column_index(name)] is not None]
    if non_null and rng.random() < 0.5:
        v = rng.choice(non_null)
        if col_type == "date":
            # half the time express the date as an ISO string literal
            if rng.random() < 0.5:
                return format_iso_date(v)
            return SysDate(v - reference_date - rng.choice((0, 1, 30)))
        return v
    if col_type == "int":
        return rng.randint(-20, 120)
    if col_type == "float":
        return round(rng.uniform(-50.0, 500.0), 2)
    if col_type == "string":
        return rng.choice(_STRINGS)
    if col_type == "date":
        if rng.random() < 0.5:
            return format_iso_date(rng.randint(_DATE_LO, _DATE_HI))
        return SysDate(rng.randint(_DATE_LO, _DATE_HI) - reference_date)
    return rng.random() < 0.5


def random_predicates(rng: random.Random, table: Table,
                      reference_date: int) -> tuple:
    preds = []
    for _ in range(rng.randint(0, 2)):
        col = rng.choice(table.columns)
        op = rng.choice(("=", "!=", "<", "<=", ">", ">="))
        preds.append(
            Predicate(col.name, op,
                      _pred_literal(rng, table, col.name, col.type,
                                    reference_date))
        )
    return tuple(preds)


def random_query(rng: random.Random, table: Table,
                 reference_date: int) -> QueryPlan:
    """A valid plan for the table; roughly half the draws are grouped."""
    types = {c.name: c.type for c in table.columns}
    numeric = [c.name for c in table.columns if c.type in ("int", "float")]
    predicates = random_predicates(rng, table, reference_date)
    limit = rng.randint(0, 10) if rng.random() < 0.25 else None

    if rng.random() < 0.5:
        keys = rng.sample(
            [c.name for c in table.columns], rng.randint(0, min(2, len(table.columns)))
        )
        used = set(keys)
        projections = [Projection(ColumnRef(k)) for k in keys]
        n_aggs = rng.randint(1, 3)
        seen_aggs = set()
        for _ in range(n_aggs):
            fn = rng.choice(("SUM", "AVG", "COUNT", "MIN", "MAX"))
            if fn in ("SUM", "AVG"):
                if not numeric:
                    fn = "COUNT"
                    arg = "*"
                else:
                    arg = rng.choice(numeric)
            elif fn == "COUNT":
                arg = "*" if rng.random() < 0.4 else rng.choice(table.columns).name
            else:
                arg = rng.choice(table.columns).name
            if (fn, arg) in seen_aggs:
                continue
            seen_aggs.add((fn, arg))
            alias = None
            default_name = f"{fn}({arg})"
            if rng.random() < 0.5 or default_name in used:
                candidates = [a for a in _ALIASES if a not in used and a not in types]
                if not candidates:
                    continue
                alias = rng.choice(candidates)
            name = alias or default_name
            if name in used:
                continue
            used.add(name)
            projections.append(Projection(Aggregate(fn, arg), alias))
        if len(projections) == len(keys):
            projections.append(Projection(Aggregate("COUNT", "*"), "n_rows"))
            used.add("n_rows")
        # only identifier-shaped output names re-parse in ORDER BY
        sortable = sorted(n for n in used if n.isidentifier())
        order_by = tuple(
            OrderKey(col, rng.random() < 0.7)
            for col in rng.sample(sortable, rng.randint(0, min(2, len(sortable))))
        )
        return QueryPlan(
            projections=tuple(projections),
            source=table.name,
            predicates=predicates,
            group_by=tuple(keys),
            order_by=order_by,
            limit=limit,
        )

    cols = rng.sample([c.name for c in table.columns],
                      rng.randint(1, len(table.columns)))
    used = set(cols)
    projections = []
    for c in cols:
        alias = None
        if rng.random() < 0.2:
            candidates = [a for a in _ALIASES if a not in used]
            if candidates:
                alias = rng.choice(candidates)
                used.add(alias)
        projections.append(Projection(ColumnRef(c), alias))
    order_by = tuple(
        OrderKey(c.name, rng.random() < 0.7)
        for c in rng.sample(table.columns, rng.randint(0, min(2, len(table.columns))))
    )
    return QueryPlan(
        projections=tuple(projections),
        source=table.name,
        predicates=predicates,
        order_by=order_by,
        limit=limit,
    )


def random_translatable_query(rng: random.Random, table: Table,
                              reference_date: int) -> QueryPlan:
    """A plan in the translatable shape: no LIMIT; grouped plans project
    the group keys first and unaliased, ungrouped plans project every
    source column in order."""
    numeric = [c.name for c in table.columns if c.type in ("int", "float")]
    predicates = random_predicates(rng, table, reference_date)

    if rng.random() < 0.6:
        keys = rng.sample(
            [c.name for c in table.columns],
            rng.randint(0, min(2, len(table.columns))),
        )
        used = set(keys)
        projections = [Projection(ColumnRef(k)) for k in keys]
        seen_aggs = set()
        for _ in range(rng.randint(1, 3)):
            fn = rng.choice(("SUM", "AVG", "COUNT", "MIN", "MAX"))
            if fn in ("SUM", "AVG"):
                if not numeric:
                    fn, arg = "COUNT", "*"
                else:
                    arg = rng.choice(numeric)
            elif fn == "COUNT":
                arg = "*" if rng.random() < 0.4 else rng.choice(table.columns).name
            else:
                arg = rng.choice(table.columns).name
            if (fn, arg) in seen_aggs:
                continue
            seen_aggs.add((fn, arg))
            alias = None
            default_name = f"{fn}({arg})"
            if rng.random() < 0.5 or default_name in used:
                candidates = [a for a in _ALIASES if a not in used]
                if not candidates:
                    continue
                alias = rng.choice(candidates)
            name = alias or default_name
            if name in used:
                continue
            used.add(name)
            projections.append(Projection(Aggregate(fn, arg), alias))
        if len(projections) == len(keys):
            projections.append(Projection(Aggregate("COUNT", "*"), "n_rows"))
            used.add("n_rows")
        order_by = tuple(
            OrderKey(col, rng.random() < 0.7)
            for col in rng.sample(sorted(used), rng.randint(0, min(2, len(used))))
        )
        return QueryPlan(
            projections=tuple(projections),
            source=table.name,
            predicates=predicates,
            group_by=tuple(keys),
            order_by=order_by,
        )

    projections = tuple(Projection(ColumnRef(c.name)) for c in table.columns)
    min_keys = 0 if predicates else 1  # an empty plan has no pipeline form
    order_by = tuple(
        OrderKey(c.name, rng.random() < 0.7)
        for c in rng.sample(
            table.columns, rng.randint(min_keys, min(2, len(table.columns)))
        )
    )
    return QueryPlan(
        projections=projections,
        source=table.name,
        predicates=predicates,
        order_by=order_by,
    )


# --- pipelines ---------------------------------------------------------------

# words the expression grammar claims for itself; a column spelled this
# way parses as a keyword or function, never as a column reference
_EXPR_RESERVED = frozenset(
    ("and", "or", "not", "true", "false", "abs", "round", "year", "month", "if")
)


def _referable(schema: dict[str, str], kinds) -> list[str]:
    # only identifier-shaped names re-parse as expr column references
    return [
        n for n, t in schema.items()
        if t in kinds and n.isidentifier() and n not in _EXPR_RESERVED
    ]


def _numeric_atom(rng: random.Random, schema: dict[str, str]):
    numeric = _referable(schema, ("int", "float"))
    if numeric and rng.random() < 0.7:
        return Col(rng.choice(numeric))
    if rng.random() < 0.5:
        return Lit(rng.randint(-9, 99), "int")
    return Lit(round(rng.uniform(-9.0, 99.0), 2), "float")


def _numeric_expr(rng: random.Random, schema: dict[str, str], depth: int = 0):
    dates = _referable(schema, ("date",))
    roll = rng.random()
    if depth >= 2 or roll < 0.35:
        return _numeric_atom(rng, schema)
    if roll < 0.75:
        op = rng.choice(("+", "-", "*", "/"))
        left = _numeric_expr(rng, schema, depth + 1)
        if op == "/":
            # keep division total: non-zero literal divisors only
            right = Lit(rng.choice((2.0, 4.0, -8.0, 0.5, 3.0)), "float")
        else:
            right = _numeric_expr(rng, schema, depth + 1)
        return Binary(op, left, right)
    if roll < 0.85:
        return Call("abs", (_numeric_expr(rng, schema, depth + 1),))
    if roll < 0.95 or not dates:
        return Call(
            "round",
            (_numeric_expr(rng, schema, depth + 1), Lit(rng.randint(0, 2), "int")),
        )
    return Call(rng.choice(("year", "month")), (Col(rng.choice(dates)),))


def _comparison(rng: random.Random, schema: dict[str, str]):
    numeric = _referable(schema, ("int", "float"))
    strings = _referable(schema, ("string",))
    dates = _referable(schema, ("date",))
    op = rng.choice(("==", "!=", "<", "<=", ">", ">="))
    if strings and rng.random() < 0.25:
        return Binary(
            rng.choice(("==", "!=")),
            Col(rng.choice(strings)),
            Lit(rng.choice(_STRINGS), "string"),
        )
    if dates and rng.random() < 0.25:
        return Binary(
            op, Col(rng.choice(dates)),
            Lit(rng.randint(_DATE_LO, _DATE_HI), "date"),
        )
    if numeric:
        return Binary(op, _numeric_expr(rng, schema, depth=1),
                      _numeric_atom(rng, schema))
    return Lit(True, "bool")


def _bool_expr(rng: random.Random, schema: dict[str, str]):
    bools = _referable(schema, ("bool",))
    roll = rng.random()
    if bools and roll < 0.2:
        return Col(rng.choice(bools))
    if roll < 0.75:
        return _comparison(rng, schema)
    if roll < 0.9:
        return Binary(rng.choice(("and", "or")),
                      _comparison(rng, schema), _comparison(rng, schema))
    return Unary("not", _comparison(rng, schema))


def _expr_kind(schema: dict[str, str], expr) -> str:
    from chainplan.expr import infer_type

    return infer_type(expr, schema)


def random_pipeline(rng: random.Random, table: Table,
                    max_steps: int = 6) -> Pipeline:
    """A pipeline that validates against the table's schema."""
    schema = dict(table.schema)
    steps = []
    fresh = iter(f"t{i}" for i in range(1, 40))
    n = rng.randint(1, max_steps)
    for pos in range(n):
        last = pos == n - 1
        referable = sorted(k for k in schema if k.isidentifier())
        choice = rng.random()
        if choice < 0.3:
            steps.append(FilterStep(_bool_expr(rng, schema)))
        elif choice < 0.6:
            overwrite = rng.random() < 0.15 and bool(referable)
            if overwrite:
                name = rng.choice(referable)
            else:
                name = next(f for f in fresh if f not in schema)
            roll = rng.random()
            if roll < 0.7:
                expr = _numeric_expr(rng, schema)
            elif roll < 0.85:
                expr = _bool_expr(rng, schema)
            else:
                expr = Lit(rng.choice(_STRINGS), "string")
            steps.append(TransformStep(name, expr, overwrite=overwrite))
            schema[name] = _expr_kind(schema, expr)
        elif choice < 0.85 and referable:
            keys = rng.sample(referable, rng.randint(0, min(2, len(referable))))
            numeric = _referable(schema, ("int", "float"))
            aggs = []
            used = set(keys)
            for _ in range(rng.randint(1, 3)):
                fn = rng.choice(("sum", "avg", "count", "min", "max"))
                if fn in ("sum", "avg"):
                    if not numeric:
                        fn = "count"
                        column = "*"
                    else:
                        column = rng.choice(numeric)
                elif fn == "count":
                    column = "*" if rng.random() < 0.4 else rng.choice(referable)
                else:
                    column = rng.choice(referable)
                alias = None
                default_name = f"{fn.upper()}({column})"
                # unaliased outputs are not identifiers, so later steps
                # could never reference them; alias unless this step ends
                # the pipeline
                if not last or rng.random() < 0.4 or default_name in used:
                    candidates = [a for a in _ALIASES
                                  if a not in used and a not in schema]
                    if not candidates:
                        continue
                    alias = rng.choice(candidates)
                name = alias or default_name
                if name in used:
                    continue
                used.add(name)
                aggs.append(AggSpec(fn, column, alias))
            if not aggs:
                if "n_rows" in used:
                    continue
                aggs = [AggSpec("count", "*", "n_rows")]
            steps.append(GroupbyStep(tuple(keys), tuple(aggs)))
            new_schema = {k: schema[k] for k in keys}
            for a in aggs:
                if a.fn == "count":
                    new_schema[a.output_name] = "int"
                elif a.fn == "avg":
                    new_schema[a.output_name] = "float"
                else:
                    new_schema[a.output_name] = schema[a.column]
            schema = new_schema
        elif referable:
            keys = tuple(
                SortKey(c, rng.random() < 0.7)
                for c in rng.sample(referable, rng.randint(1, min(2, len(referable))))
            )
            steps.append(SortStep(keys))
    if not steps:
        steps.append(FilterStep(Lit(True, "bool")))
    return Pipeline(tuple(steps))


# --- turns -------------------------------------------------------------------

_WORDS = (
    "alpha", "beta", "gamma", "delta", "review", "metrics", "series",
    "window", "compare", "baseline", "traffic", "volume", "trend",
)


def _phrase(rng: random.Random, lo: int = 2, hi: int = 6) -> str:
    return " ".join(rng.choice(_WORDS) for _ in range(rng.randint(lo, hi)))


def _multiline(rng: random.Random) -> str:
    lines = [_phrase(rng)]
    if rng.random() < 0.3:
        lines.append(_phrase(rng))
    return "\n".join(lines)


def random_turn(rng: random.Random) -> Turn:
    """A valid turn that survives a render/parse round trip."""
    shape = rng.choice(
        ("original", "updated", "final", "question_only", "updated_final")
    )
    question = _multiline(rng) if rng.random() < 0.5 else None
    observation = _multiline(rng) if rng.random() < 0.4 else None
    if shape == "original":
        items = tuple(_phrase(rng) for _ in range(rng.randint(1, 4)))
        return Turn(question=question, original_tasks=items,
                    next_task=rng.choice(items), observation=observation)
    if shape == "updated":
        items = tuple(_phrase(rng) for _ in range(rng.randint(1, 4)))
        return Turn(question=question, updated_tasks=items,
                    next_task=rng.choice(items), observation=observation)
    if shape == "updated_final":
        items = tuple(_phrase(rng) for _ in range(rng.randint(1, 3)))
        return Turn(updated_tasks=items, final_answer=_phrase(rng),
                    observation=observation)
    if shape == "final":
        return Turn(question=question, observation=observation,
                    final_answer=_multiline(rng))
    return Turn(question=question or _phrase(rng), observation=observation)


_LABEL_SOUP = (
    "Question: probe",
    "Question:",
    "Original task list:",
    "Updated Task List:",
    "Next task: go",
    "Next task:",
    "Final Answer:",
    "Final Answer: stop here",
    "Observation: saw a thing",
    "1. first step",
    "2) second",
    "- dashed item",
    "* starred item",
    "plain words between labels",
    "   indented continuation",
    "",
)


def fuzz_text(rng: random.Random) -> str:
    strategy = rng.random()
    if strategy < 0.35:
        n = rng.randint(0, 100)
        chars = []
        for _ in range(n):
            if rng.random() < 0.08:
                chars.append("\n")
            else:
                chars.append(chr(rng.randint(32, 0x2FF)))
        return "".join(chars)
    if strategy < 0.75:
        return "\n".join(
            rng.choice(_LABEL_SOUP) for _ in range(rng.randint(0, 12))
        )
    # mutate a valid rendering
    from chainplan.gateway import render_turn

    text = render_turn(random_turn(rng))
    lines = text.splitlines()
    mutation = rng.random()
    if mutation < 0.33 and lines:
        lines.insert(rng.randrange(len(lines) + 1), rng.choice(_LABEL_SOUP))
    elif mutation < 0.66 and lines:
        lines.pop(rng.randrange(len(lines)))
    else:
        lines = lines + lines[: rng.randint(0, len(lines))]
    return "\n".join(lines)


# --- procedure docs ----------------------------------------------------------

_STEP_VERBS = (
    "Analyze {noun} for the target department",
    "Examine {noun} across recent months",
    "Investigate {noun} and note anomalies",
    "Gather {noun} from the data store",
    "Compute the {noun} ratio",
    "Formulate the plan from {noun}",
    "Draft the final numbers using {noun}",
)

_STEP_NOUNS = (
    "historical sales", "market conditions", "traffic trends",
    "user growth", "seasonal peaks", "promotion effects",
)


def random_sop_steps(rng: random.Random, max_steps: int = 8) -> list[str]:
    n = rng.randint(1, max_steps)
    steps = []
    for i in range(n):
        if steps and rng.random() < 0.1:
            steps.append(rng.choice(steps))  # duplicate exercises pruning
            continue
        verb = rng.choice(_STEP_VERBS)
        steps.append(verb.format(noun=rng.choice(_STEP_NOUNS)))
    return steps[:max_steps]
