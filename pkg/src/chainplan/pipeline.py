"""Closed four-operation analysis pipeline over tables.

A pipeline is a sequence of atomic steps, each one of:

    Filter:    keep rows where a boolean expression holds
    Transform: add (or overwrite) one column from an expression
    Groupby:   aggregate rows by zero or more key columns
    Sort:      stable multi-key ordering, nulls last

Text form, one step per blank-line-separated block:

    # Thought: drop other departments
    Filter: dept_id == 'Computer'

    Transform: margin = profit / revenue

    Groupby: keys = year, month; agg = sum(sales) as total, count(*)

    Sort: year asc, month asc

Kind names are case-insensitive; "Filter Rows", "Transform Columns",
"Group By" and "Sort Rows" are accepted synonyms. A block with more
than one operation line is rejected as non-atomic.

Aggregate output columns default to SUM(col)-style names so grouped
results line up with the SQL engine; `as alias` overrides.

Validation walks the whole chain against the input schema before any
row is touched; execution returns the result table plus a per-step
trace (rows in, rows out, output columns).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import (
    ExprRuntimeError,
    ExprSyntaxError,
    ExprTypeError,
    NotAtomicError,
    PipelineRuntimeError,
    PipelineValidationError,
    StepParseError,
    TranslationError,
    UnknownKindError,
)
from .expr import (
    Binary,
    Col,
    CompiledExpr,
    Expr,
    Lit,
    compile_expr,
    parse_expr,
    render_expr,
)
from .sql import Aggregate, ColumnRef, QueryEnv, QueryPlan, SysDate, sort_rows
from .table import Column, Table, Value

AGG_FNS = ("sum", "avg", "count", "min", "max")

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


# --- step types ---------------------------------------------------------------

@dataclass(frozen=True)
class AggSpec:
    fn: str                 # one of AGG_FNS
    column: str             # source column, or "*" for count
    alias: str | None = None

    @property
    def output_name(self) -> str:
        return self.alias or f"{self.fn.upper()}({self.column})"


@dataclass(frozen=True)
class SortKey:
    column: str
    ascending: bool = True


@dataclass(frozen=True)
class FilterStep:
    predicate: Expr
    thought: str | None = None

    kind = "Filter"


@dataclass(frozen=True)
class TransformStep:
    name: str
    expr: Expr
    overwrite: bool = False
    thought: str | None = None

    kind = "Transform"


@dataclass(frozen=True)
class GroupbyStep:
    keys: tuple[str, ...]
    aggs: tuple[AggSpec, ...]
    thought: str | None = None

    kind = "Groupby"


@dataclass(frozen=True)
class SortStep:
    keys: tuple[SortKey, ...]
    thought: str | None = None

    kind = "Sort"


Step = FilterStep | TransformStep | GroupbyStep | SortStep


@dataclass(frozen=True)
class Pipeline:
    steps: tuple[Step, ...]

    def __post_init__(self) -> None:
        if not self.steps:
            raise PipelineValidationError("pipeline must be non-empty")


@dataclass(frozen=True)
class StepRecord:
    index: int
    kind: str
    rows_in: int
    rows_out: int
    columns: tuple[str, ...]


# --- parsing ------------------------------------------------------------------

_KIND_SYNONYMS = {
    "filter": "Filter",
    "filterrows": "Filter",
    "transform": "Transform",
    "transformcolumns": "Transform",
    "groupby": "Groupby",
    "group": "Groupby",
    "sort": "Sort",
    "sortrows": "Sort",
}

_KIND_LINE_RE = re.compile(r"^([A-Za-z][A-Za-z ]*?)\s*:\s*(.*)$")
_TRANSFORM_RE = re.compile(
    r"^([A-Za-z_][A-Za-z0-9_]*)\s*=(?!=)\s*(.+?)(\s*\[overwrite\])?$"
)


def _parse_agg(text: str) -> AggSpec:
    m = re.match(
        r"^(\w+)\s*\(\s*(\*|[A-Za-z_][A-Za-z0-9_]*)\s*\)"
        r"(?:\s+as\s+([A-Za-z_][A-Za-z0-9_]*))?$",
        text.strip(),
        re.IGNORECASE,
    )
    if not m:
        raise StepParseError(f"bad aggregate spec: {text.strip()!r}")
    fn = m.group(1).lower()
    if fn not in AGG_FNS:
        raise StepParseError(f"unknown aggregate function {m.group(1)!r}")
    column = m.group(2)
    if column == "*" and fn != "count":
        raise StepParseError(f"'*' is only valid under count, not {fn}")
    return AggSpec(fn, column, m.group(3))


def _parse_groupby(rest: str) -> GroupbyStep:
    keys: tuple[str, ...] = ()
    agg_text = None
    for section in rest.split(";"):
        section = section.strip()
        if not section:
            continue
        m = re.match(r"^(keys|agg)\s*=\s*(.*)$", section, re.IGNORECASE)
        if not m:
            raise StepParseError(f"bad Groupby section: {section!r}")
        label = m.group(1).lower()
        body = m.group(2).strip()
        if label == "keys":
            parts = [p.strip() for p in body.split(",") if p.strip()]
            for p in parts:
                if not _IDENT_RE.match(p):
                    raise StepParseError(f"bad Groupby key: {p!r}")
            keys = tuple(parts)
        else:
            agg_text = body
    aggs: tuple[AggSpec, ...] = ()
    if agg_text:
        aggs = tuple(_parse_agg(a) for a in agg_text.split(",") if a.strip())
    if not keys and not aggs:
        raise StepParseError("Groupby needs keys, aggregates, or both")
    return GroupbyStep(keys=keys, aggs=aggs)


def _parse_sort(rest: str) -> SortStep:
    keys = []
    for part in rest.split(","):
        part = part.strip()
        if not part:
            continue
        m = re.match(
            r"^([A-Za-z_][A-Za-z0-9_]*)(?:\s+(asc|desc))?$", part, re.IGNORECASE
        )
        if not m:
            raise StepParseError(f"bad Sort key: {part!r}")
        ascending = (m.group(2) or "asc").lower() == "asc"
        keys.append(SortKey(m.group(1), ascending))
    if not keys:
        raise StepParseError("Sort needs at least one key")
    return SortStep(keys=tuple(keys))


def parse_step(text: str) -> Step:
    """Parse one step block: optional # Thought: line plus one operation."""
    thought_parts: list[str] = []
    op_line: str | None = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.lower().startswith("thought:"):
                thought_parts.append(body[len("thought:"):].strip())
            continue
        m = _KIND_LINE_RE.match(line)
        if not m:
            raise StepParseError(f"unrecognized step line: {line!r}")
        if op_line is not None:
            raise NotAtomicError(
                f"step holds more than one operation: {op_line!r} then {line!r}"
            )
        op_line = line

    if op_line is None:
        raise StepParseError("step has no operation line")
    m = _KIND_LINE_RE.match(op_line)
    assert m is not None
    kind_word = re.sub(r"\s+", "", m.group(1)).lower()
    rest = m.group(2).strip()
    if kind_word not in _KIND_SYNONYMS:
        raise UnknownKindError(
            f"unknown operation kind: {m.group(1)!r}; "
            "expected one of Filter, Transform, Groupby, Sort"
        )
    kind = _KIND_SYNONYMS[kind_word]
    thought = " ".join(thought_parts) or None

    try:
        if kind == "Filter":
            step: Step = FilterStep(parse_expr(rest), thought)
        elif kind == "Transform":
            tm = _TRANSFORM_RE.match(rest)
            if not tm:
                raise StepParseError(f"bad Transform: {rest!r}")
            step = TransformStep(
                name=tm.group(1),
                expr=parse_expr(tm.group(2)),
                overwrite=tm.group(3) is not None,
                thought=thought,
            )
        elif kind == "Groupby":
            g = _parse_groupby(rest)
            step = GroupbyStep(g.keys, g.aggs, thought)
        else:
            s = _parse_sort(rest)
            step = SortStep(s.keys, thought)
    except ExprSyntaxError as exc:
        raise StepParseError(f"bad expression in {kind}: {exc}") from None
    return step


def parse_pipeline(text: str) -> Pipeline:
    """Parse blank-line-separated step blocks into a Pipeline."""
    blocks = [b for b in re.split(r"\n\s*\n", text.strip()) if b.strip()]
    if not blocks:
        raise StepParseError("empty pipeline text")
    return Pipeline(tuple(parse_step(b) for b in blocks))


# --- rendering ------------------------------------------------------------------

def render_step(step: Step) -> str:
    lines = []
    if step.thought:
        lines.append(f"# Thought: {step.thought}")
    if isinstance(step, FilterStep):
        lines.append(f"Filter: {render_expr(step.predicate)}")
    elif isinstance(step, TransformStep):
        suffix = " [overwrite]" if step.overwrite else ""
        lines.append(
            f"Transform: {step.name} = {render_expr(step.expr)}{suffix}"
        )
    elif isinstance(step, GroupbyStep):
        sections = []
        if step.keys:
            sections.append(f"keys = {', '.join(step.keys)}")
        if step.aggs:
            rendered = []
            for a in step.aggs:
                item = f"{a.fn}({a.column})"
                if a.alias:
                    item += f" as {a.alias}"
                rendered.append(item)
            sections.append(f"agg = {', '.join(rendered)}")
        lines.append(f"Groupby: {'; '.join(sections)}")
    else:
        keys = ", ".join(
            f"{k.column} {'asc' if k.ascending else 'desc'}" for k in step.keys
        )
        lines.append(f"Sort: {keys}")
    return "\n".join(lines)


def render_pipeline(pipeline: Pipeline) -> str:
    return "\n\n".join(render_step(s) for s in pipeline.steps)


# --- validation -----------------------------------------------------------------

_AGG_OUTPUT_TYPE = {"avg": "float", "count": "int"}


def _groupby_schema(step: GroupbyStep, schema: dict[str, str],
                    index: int) -> dict[str, str]:
    out: dict[str, str] = {}
    for key in step.keys:
        if key not in schema:
            raise PipelineValidationError(
                f"step {index}: unknown Groupby key {key!r}"
            )
        out[key] = schema[key]
    for agg in step.aggs:
        if agg.column != "*":
            if agg.column not in schema:
                raise PipelineValidationError(
                    f"step {index}: unknown aggregate column {agg.column!r}"
                )
            if agg.fn in ("sum", "avg") and schema[agg.column] not in (
                "int",
                "float",
            ):
                raise PipelineValidationError(
                    f"step {index}: {agg.fn} over non-numeric column "
                    f"{agg.column!r} ({schema[agg.column]})"
                )
        name = agg.output_name
        if name in out:
            raise PipelineValidationError(
                f"step {index}: duplicate output column {name!r}"
            )
        out[name] = _AGG_OUTPUT_TYPE.get(agg.fn, schema.get(agg.column, "int"))
    return out


@dataclass
class _CompiledStep:
    step: Step
    schema_out: dict[str, str]
    predicate: CompiledExpr | None = None
    transform: CompiledExpr | None = None


def compile_pipeline(
    pipeline: Pipeline, schema: dict[str, str]
) -> list[_CompiledStep]:
    """Validate every step against the evolving schema; returns the
    compiled chain. Raises PipelineValidationError on the first bad step."""
    compiled: list[_CompiledStep] = []
    current = dict(schema)
    for index, step in enumerate(pipeline.steps):
        try:
            if isinstance(step, FilterStep):
                pred = compile_expr(step.predicate, current)
                if pred.kind != "bool":
                    raise PipelineValidationError(
                        f"step {index}: Filter needs a bool expression, "
                        f"got {pred.kind}"
                    )
                compiled.append(_CompiledStep(step, dict(current), predicate=pred))
            elif isinstance(step, TransformStep):
                if not _IDENT_RE.match(step.name):
                    raise PipelineValidationError(
                        f"step {index}: bad column name {step.name!r}"
                    )
                ce = compile_expr(step.expr, current)
                exists = step.name in current
                if exists and not step.overwrite:
                    raise PipelineValidationError(
                        f"step {index}: column {step.name!r} exists; "
                        f"Transform needs [overwrite]"
                    )
                if not exists and step.overwrite:
                    raise PipelineValidationError(
                        f"step {index}: [overwrite] names a missing column "
                        f"{step.name!r}"
                    )
                current = dict(current)
                current[step.name] = ce.kind
                compiled.append(_CompiledStep(step, dict(current), transform=ce))
            elif isinstance(step, GroupbyStep):
                current = _groupby_schema(step, current, index)
                compiled.append(_CompiledStep(step, dict(current)))
            else:
                for key in step.keys:
                    if key.column not in current:
                        raise PipelineValidationError(
                            f"step {index}: unknown Sort column {key.column!r}"
                        )
                compiled.append(_CompiledStep(step, dict(current)))
        except (ExprTypeError, ExprSyntaxError) as exc:
            raise PipelineValidationError(f"step {index}: {exc}") from None
    return compiled


def validate_pipeline(pipeline: Pipeline, schema: dict[str, str]) -> dict[str, str]:
    """Schema of the pipeline's result when applied to the given input."""
    return compile_pipeline(pipeline, schema)[-1].schema_out


# --- execution ------------------------------------------------------------------

def _agg_value(agg: AggSpec, rows: list[dict[str, Value]]) -> Value:
    if agg.fn == "count":
        if agg.column == "*":
            return len(rows)
        return sum(1 for r in rows if r[agg.column] is not None)
    values = [r[agg.column] for r in rows if r[agg.column] is not None]
    if not values:
        return None
    if agg.fn == "sum":
        return sum(values)
    if agg.fn == "avg":
        return float(sum(values)) / len(values)
    if agg.fn == "min":
        return min(values)
    return max(values)


def run_pipeline(
    pipeline: Pipeline, table: Table
) -> tuple[Table, tuple[StepRecord, ...]]:
    """Execute against a table; returns (result, per-step trace)."""
    chain = compile_pipeline(pipeline, table.schema)
    names = list(table.column_names)
    rows: list[dict[str, Value]] = [
        dict(zip(names, row)) for row in table.rows
    ]
    trace: list[StepRecord] = []

    for index, item in enumerate(chain):
        step = item.step
        rows_in = len(rows)
        try:
            if isinstance(step, FilterStep):
                rows = [
                    r
                    for i, r in enumerate(rows)
                    if bool(item.predicate.fn(r, i))
                ]
            elif isinstance(step, TransformStep):
                out = []
                for i, r in enumerate(rows):
                    r = dict(r)
                    r[step.name] = item.transform.fn(r, i)
                    out.append(r)
                rows = out
                if step.name not in names:
                    names.append(step.name)
            elif isinstance(step, GroupbyStep):
                groups: dict[tuple, list[dict[str, Value]]] = {}
                for r in rows:
                    key = tuple(r[k] for k in step.keys)
                    groups.setdefault(key, []).append(r)
                out = []
                for key, members in groups.items():
                    row: dict[str, Value] = dict(zip(step.keys, key))
                    for agg in step.aggs:
                        row[agg.output_name] = _agg_value(agg, members)
                    out.append(row)
                rows = out
                names = list(item.schema_out)
            else:
                tuples = [tuple(r[n] for n in names) for r in rows]
                key_spec = [
                    (names.index(k.column), k.ascending) for k in step.keys
                ]
                rows = [
                    dict(zip(names, t)) for t in sort_rows(tuples, key_spec)
                ]
        except ExprRuntimeError as exc:
            raise PipelineRuntimeError(
                str(exc), step_index=index, row_index=exc.row_index
            ) from None
        trace.append(
            StepRecord(
                index=index,
                kind=step.kind,
                rows_in=rows_in,
                rows_out=len(rows),
                columns=tuple(names),
            )
        )

    final_schema = chain[-1].schema_out
    columns = tuple(Column(n, final_schema[n]) for n in names)
    out_rows = tuple(tuple(r[n] for n in names) for r in rows)
    result = Table(name=table.name, columns=columns, rows=out_rows)
    return result, tuple(trace)


# --- SQL translation --------------------------------------------------------------

_SQL_TO_EXPR_OP = {"=": "==", "!=": "!=", "<": "<", "<=": "<=", ">": ">", ">=": ">="}


def _literal_expr(value, col_type: str, env: QueryEnv) -> Lit:
    if isinstance(value, SysDate):
        return Lit(env.reference_date + value.offset_days, "date")
    if isinstance(value, bool):
        return Lit(value, "bool")
    if isinstance(value, str):
        if col_type == "date":
            from .dates import parse_iso_date

            return Lit(parse_iso_date(value), "date")
        return Lit(value, "string")
    if isinstance(value, float):
        return Lit(value, "float")
    return Lit(value, "int")


def translate_query(plan: QueryPlan, env: QueryEnv) -> Pipeline:
    """Mechanically rewrite a query plan as an equivalent pipeline.

    Translatable plans: no LIMIT; grouped plans must project the group
    keys first, unaliased, in GROUP BY order; ungrouped plans must
    project every source column in order, unaliased. sysdate() folds to
    the environment's concrete date.
    """
    table = env.catalog.get(plan.source)
    schema = table.schema
    if plan.limit is not None:
        raise TranslationError("LIMIT has no pipeline equivalent")

    steps: list[Step] = []
    for pred in plan.predicates:
        if pred.column not in schema:
            raise TranslationError(
                f"unknown predicate column {pred.column!r}"
            )
        lit = _literal_expr(pred.value, schema[pred.column], env)
        predicate = Binary(_SQL_TO_EXPR_OP[pred.op], Col(pred.column), lit)
        steps.append(
            FilterStep(predicate, thought=f"keep rows where {render_expr(predicate)}")
        )

    if plan.is_grouped:
        key_refs = [
            p for p in plan.projections if isinstance(p.expr, ColumnRef)
        ]
        if tuple(p.expr.name for p in key_refs) != plan.group_by:
            raise TranslationError(
                "grouped plan must project its group keys in GROUP BY order"
            )
        if any(p.alias for p in key_refs):
            raise TranslationError("aliased group keys have no pipeline form")
        agg_projs = [
            p for p in plan.projections if isinstance(p.expr, Aggregate)
        ]
        if [p for p in plan.projections[: len(key_refs)]] != key_refs:
            raise TranslationError(
                "grouped plan must project group keys before aggregates"
            )
        aggs = tuple(
            AggSpec(p.expr.fn.lower(), p.expr.arg, p.alias) for p in agg_projs
        )
        steps.append(
            GroupbyStep(
                keys=plan.group_by,
                aggs=aggs,
                thought="aggregate per group key",
            )
        )
    else:
        expected = tuple(table.column_names)
        actual = tuple(
            p.expr.name for p in plan.projections if isinstance(p.expr, ColumnRef)
        )
        if actual != expected or any(p.alias for p in plan.projections):
            raise TranslationError(
                "ungrouped plan must project every source column in order"
            )

    if plan.order_by:
        steps.append(
            SortStep(
                keys=tuple(
                    SortKey(k.column, k.ascending) for k in plan.order_by
                ),
                thought="order the result",
            )
        )

    if not steps:
        raise TranslationError("plan translates to an empty pipeline")
    return Pipeline(tuple(steps))
