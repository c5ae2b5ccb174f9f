"""SQL-subset parser and single-pass executor over catalog tables.

Grammar (keywords case-insensitive):

    query  := SELECT item {, item} FROM ident
              [WHERE cond {AND cond}]
              [GROUP BY ident {, ident}]
              [ORDER BY ident [ASC|DESC] {, ident [ASC|DESC]}]
              [LIMIT n]
    item   := (ident | agg '(' (ident | '*') ')') [AS ident]
    agg    := SUM | AVG | COUNT | MIN | MAX      ('*' only under COUNT)
    cond   := ident op literal | ident op SYSDATE '(' [-]int ')'
    op     := = | != | < | <= | > | >=

Anything beyond the grammar (joins, subqueries, OR, projection
arithmetic) is rejected with the offending token and position.

Execution semantics:
  - predicates are a conjunction; a null cell fails every comparison
  - sysdate(k) resolves to the environment's reference date plus k days
  - SUM/AVG skip nulls, COUNT(*) counts rows, COUNT(col) counts non-nulls
  - grouped output rows appear in first-seen key order, then ORDER BY
    (stable, nulls last), then LIMIT
  - aggregate output columns are named SUM(col) etc. unless aliased
  - a grouped query over an empty (or fully filtered) input yields zero
    rows, including the no-key whole-table aggregation form
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .dates import parse_iso_date
from .errors import (
    QueryTypeError,
    ResolutionError,
    SqlSyntaxError,
    UnsupportedConstructError,
)
from .table import Catalog, Column, Table, Value

AGGREGATES = ("SUM", "AVG", "COUNT", "MIN", "MAX")
COMPARISONS = ("=", "!=", "<", "<=", ">", ">=")

# Constructs we recognise well enough to reject by name.
_KNOWN_UNSUPPORTED = {
    "JOIN", "INNER", "LEFT", "RIGHT", "OUTER", "ON", "OR", "NOT", "HAVING",
    "UNION", "DISTINCT", "OFFSET", "IN", "LIKE", "BETWEEN", "CASE", "EXISTS",
    "INSERT", "UPDATE", "DELETE", "CREATE", "DROP",
}


# --- plan types -------------------------------------------------------------

@dataclass(frozen=True)
class ColumnRef:
    name: str


@dataclass(frozen=True)
class Aggregate:
    fn: str           # one of AGGREGATES
    arg: str          # column name, or "*" for COUNT(*)


@dataclass(frozen=True)
class Projection:
    expr: ColumnRef | Aggregate
    alias: str | None = None

    @property
    def output_name(self) -> str:
        if self.alias:
            return self.alias
        if isinstance(self.expr, ColumnRef):
            return self.expr.name
        return f"{self.expr.fn}({self.expr.arg})"


@dataclass(frozen=True)
class SysDate:
    offset_days: int


Literal = int | float | str | bool | SysDate


@dataclass(frozen=True)
class Predicate:
    column: str
    op: str
    value: Literal


@dataclass(frozen=True)
class OrderKey:
    column: str
    ascending: bool = True


@dataclass(frozen=True)
class QueryPlan:
    projections: tuple[Projection, ...]
    source: str
    predicates: tuple[Predicate, ...] = ()
    group_by: tuple[str, ...] = ()
    order_by: tuple[OrderKey, ...] = ()
    limit: int | None = None

    def __post_init__(self) -> None:
        if not self.projections:
            raise ValueError("plan must project at least one item")
        if any(isinstance(p.expr, Aggregate) for p in self.projections):
            keys = set(self.group_by)
            for p in self.projections:
                if isinstance(p.expr, ColumnRef) and p.expr.name not in keys:
                    raise ValueError(
                        f"non-aggregate projection {p.expr.name!r} missing "
                        f"from GROUP BY"
                    )

    @property
    def is_grouped(self) -> bool:
        return bool(self.group_by) or any(
            isinstance(p.expr, Aggregate) for p in self.projections
        )


@dataclass
class QueryEnv:
    """Execution environment: a deterministic reference date (epoch days)
    and the table catalog."""

    reference_date: int
    catalog: Catalog


# --- lexer ------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<string>'(?:[^']|'')*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|!=|=|<|>)
  | (?P<punct>[(),*;+\-/.])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str      # number | string | ident | keyword | op | punct | eof
    text: str
    pos: int


def _lex(text: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise SqlSyntaxError(f"unexpected character {text[i]!r}", position=i)
        i = m.end()
        if m.lastgroup == "ws":
            continue
        kind = m.lastgroup or "punct"
        tokens.append(Token(kind, m.group(), m.start()))
    tokens.append(Token("eof", "<end>", len(text)))
    return tokens


# --- parser -----------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _lex(text)
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text.upper() == word

    def expect_keyword(self, word: str) -> Token:
        tok = self.next()
        if tok.kind != "ident" or tok.text.upper() != word:
            raise SqlSyntaxError(
                f"expected {word}, got {tok.text!r}", position=tok.pos
            )
        return tok

    def expect_ident(self, what: str) -> Token:
        tok = self.next()
        if tok.kind != "ident":
            raise SqlSyntaxError(
                f"expected {what}, got {tok.text!r}", position=tok.pos
            )
        upper = tok.text.upper()
        if upper in _KNOWN_UNSUPPORTED:
            raise UnsupportedConstructError(tok.text, tok.pos)
        return tok

    def unexpected(self, tok: Token) -> SqlSyntaxError:
        if tok.kind == "ident" and tok.text.upper() in _KNOWN_UNSUPPORTED:
            return UnsupportedConstructError(tok.text, tok.pos)
        if tok.kind == "punct" and tok.text in "(+-*/":
            return UnsupportedConstructError(tok.text, tok.pos)
        return SqlSyntaxError(f"unexpected token {tok.text!r}", position=tok.pos)

    # grammar productions

    def parse(self) -> QueryPlan:
        first = self.peek()
        if first.kind == "ident" and first.text.upper() in _KNOWN_UNSUPPORTED:
            raise UnsupportedConstructError(first.text, first.pos)
        self.expect_keyword("SELECT")
        projections = [self.projection()]
        while self.peek().text == ",":
            self.next()
            projections.append(self.projection())
        if not self.at_keyword("FROM"):
            raise self.unexpected(self.peek())
        self.next()
        source = self.expect_ident("table name").text

        predicates: list[Predicate] = []
        group_by: list[str] = []
        order_by: list[OrderKey] = []
        limit: int | None = None

        if self.at_keyword("WHERE"):
            self.next()
            predicates.append(self.condition())
            while self.at_keyword("AND"):
                self.next()
                predicates.append(self.condition())

        if self.at_keyword("GROUP"):
            self.next()
            self.expect_keyword("BY")
            group_by.append(self.expect_ident("group column").text)
            while self.peek().text == ",":
                self.next()
                group_by.append(self.expect_ident("group column").text)

        if self.at_keyword("ORDER"):
            self.next()
            self.expect_keyword("BY")
            order_by.append(self.order_key())
            while self.peek().text == ",":
                self.next()
                order_by.append(self.order_key())

        if self.at_keyword("LIMIT"):
            self.next()
            tok = self.next()
            if tok.kind != "number" or not re.fullmatch(r"\d+", tok.text):
                raise SqlSyntaxError(
                    f"LIMIT expects a non-negative integer, got {tok.text!r}",
                    position=tok.pos,
                )
            limit = int(tok.text)

        if self.peek().text == ";":
            self.next()
        tail = self.peek()
        if tail.kind != "eof":
            raise self.unexpected(tail)

        try:
            return QueryPlan(
                projections=tuple(projections),
                source=source,
                predicates=tuple(predicates),
                group_by=tuple(group_by),
                order_by=tuple(order_by),
                limit=limit,
            )
        except ValueError as exc:
            raise SqlSyntaxError(str(exc)) from None

    def projection(self) -> Projection:
        tok = self.next()
        if tok.kind != "ident":
            raise self.unexpected(tok)
        upper = tok.text.upper()
        if upper in AGGREGATES:
            if self.peek().text != "(":
                raise SqlSyntaxError(
                    f"{upper} must be called as {upper}(column)",
                    position=self.peek().pos,
                )
            self.next()
            arg_tok = self.next()
            if arg_tok.text == "*":
                if upper != "COUNT":
                    raise SqlSyntaxError(
                        f"'*' is only valid under COUNT", position=arg_tok.pos
                    )
                arg = "*"
            elif arg_tok.kind == "ident":
                arg = arg_tok.text
            else:
                raise self.unexpected(arg_tok)
            close = self.next()
            if close.text != ")":
                raise self.unexpected(close)
            expr: ColumnRef | Aggregate = Aggregate(upper, arg)
        else:
            if upper in _KNOWN_UNSUPPORTED:
                raise UnsupportedConstructError(tok.text, tok.pos)
            expr = ColumnRef(tok.text)

        alias = None
        if self.at_keyword("AS"):
            self.next()
            alias = self.expect_ident("alias").text
        nxt = self.peek()
        if nxt.text not in (",",) and not self.at_keyword("FROM"):
            raise self.unexpected(nxt)
        return Projection(expr, alias)

    def condition(self) -> Predicate:
        column = self.expect_ident("predicate column").text
        op_tok = self.next()
        if op_tok.kind != "op" or op_tok.text not in COMPARISONS:
            raise self.unexpected(op_tok)
        value = self.literal()
        return Predicate(column, op_tok.text, value)

    def literal(self) -> Literal:
        tok = self.next()
        if tok.kind == "ident" and tok.text.upper() == "SYSDATE":
            open_tok = self.next()
            if open_tok.text != "(":
                raise SqlSyntaxError(
                    "sysdate expects (offset)", position=open_tok.pos
                )
            sign = 1
            num = self.next()
            if num.text == "-":
                sign = -1
                num = self.next()
            if num.kind != "number" or not re.fullmatch(r"\d+", num.text):
                raise SqlSyntaxError(
                    f"sysdate expects an integer day offset, got {num.text!r}",
                    position=num.pos,
                )
            close = self.next()
            if close.text != ")":
                raise self.unexpected(close)
            return SysDate(sign * int(num.text))
        if tok.kind == "ident" and tok.text.upper() == "TRUE":
            return True
        if tok.kind == "ident" and tok.text.upper() == "FALSE":
            return False
        sign = 1
        if tok.text == "-":
            sign = -1
            tok = self.next()
        if tok.kind == "number":
            if "." in tok.text or "e" in tok.text or "E" in tok.text:
                return sign * float(tok.text)
            return sign * int(tok.text)
        if sign == -1:
            raise self.unexpected(tok)
        if tok.kind == "string":
            return tok.text[1:-1].replace("''", "'")
        raise self.unexpected(tok)

    def order_key(self) -> OrderKey:
        column = self.expect_ident("order column").text
        ascending = True
        if self.at_keyword("ASC"):
            self.next()
        elif self.at_keyword("DESC"):
            self.next()
            ascending = False
        return OrderKey(column, ascending)


def parse_query(text: str) -> QueryPlan:
    """Parse a SQL-subset string into a QueryPlan."""
    return _Parser(text).parse()


# --- canonical rendering ----------------------------------------------------

def _render_literal(value: Literal) -> str:
    if isinstance(value, SysDate):
        return f"sysdate({value.offset_days})"
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    if isinstance(value, str):
        escaped = value.replace("'", "''")
        return f"'{escaped}'"
    return repr(value)


def render_sql(plan: QueryPlan) -> str:
    """Render a plan to its canonical SQL string. parse(render(p)) == p."""
    items = []
    for p in plan.projections:
        if isinstance(p.expr, ColumnRef):
            text = p.expr.name
        else:
            text = f"{p.expr.fn}({p.expr.arg})"
        if p.alias:
            text += f" AS {p.alias}"
        items.append(text)
    parts = [f"SELECT {', '.join(items)} FROM {plan.source}"]
    if plan.predicates:
        conds = " AND ".join(
            f"{c.column} {c.op} {_render_literal(c.value)}"
            for c in plan.predicates
        )
        parts.append(f"WHERE {conds}")
    if plan.group_by:
        parts.append(f"GROUP BY {', '.join(plan.group_by)}")
    if plan.order_by:
        keys = ", ".join(
            f"{k.column} {'ASC' if k.ascending else 'DESC'}"
            for k in plan.order_by
        )
        parts.append(f"ORDER BY {keys}")
    if plan.limit is not None:
        parts.append(f"LIMIT {plan.limit}")
    return " ".join(parts)


# --- execution --------------------------------------------------------------

class _Desc:
    """Inverts comparison so one stable sort handles mixed directions."""

    __slots__ = ("v",)

    def __init__(self, v):
        self.v = v

    def __lt__(self, other: "_Desc") -> bool:
        return other.v < self.v

    def __eq__(self, other: object) -> bool:
        return isinstance(other, _Desc) and other.v == self.v


def sort_rows(
    rows: list[tuple[Value, ...]],
    keys: list[tuple[int, bool]],
) -> list[tuple[Value, ...]]:
    """Stable multi-key sort; nulls last under either direction."""

    def key_fn(row: tuple[Value, ...]):
        parts = []
        for idx, ascending in keys:
            v = row[idx]
            if v is None:
                parts.append((True, 0))
            elif ascending:
                parts.append((False, v))
            else:
                parts.append((False, _Desc(v)))
        return tuple(parts)

    return sorted(rows, key=key_fn)


def _coerce_literal(pred: Predicate, col_type: str, env: QueryEnv) -> Value:
    """Resolve a predicate literal against the column type; returns the
    comparable runtime value."""
    v = pred.value
    if isinstance(v, SysDate):
        if col_type != "date":
            raise QueryTypeError(
                f"sysdate() compared against non-date column {pred.column!r}"
            )
        return env.reference_date + v.offset_days
    if col_type in ("int", "float"):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise QueryTypeError(
                f"column {pred.column!r} is {col_type}, literal {v!r} is not numeric"
            )
        return v
    if col_type == "string":
        if not isinstance(v, str):
            raise QueryTypeError(
                f"column {pred.column!r} is string, literal {v!r} is not"
            )
        return v
    if col_type == "date":
        if isinstance(v, str):
            try:
                return parse_iso_date(v)
            except ValueError:
                raise QueryTypeError(
                    f"column {pred.column!r} is date, literal {v!r} is not "
                    f"an ISO-8601 date"
                ) from None
        raise QueryTypeError(
            f"column {pred.column!r} is date, literal {v!r} is not a date"
        )
    if col_type == "bool":
        if not isinstance(v, bool):
            raise QueryTypeError(
                f"column {pred.column!r} is bool, literal {v!r} is not"
            )
        return v
    raise QueryTypeError(f"unhandled column type {col_type!r}")


_OPS = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def _aggregate(fn: str, arg: str, rows: list[tuple[Value, ...]],
               col_idx: int | None) -> Value:
    if fn == "COUNT":
        if arg == "*":
            return len(rows)
        return sum(1 for r in rows if r[col_idx] is not None)
    values = [r[col_idx] for r in rows if r[col_idx] is not None]
    if not values:
        return None
    if fn == "SUM":
        return sum(values)
    if fn == "AVG":
        return float(sum(values)) / len(values)
    if fn == "MIN":
        return min(values)
    if fn == "MAX":
        return max(values)
    raise QueryTypeError(f"unknown aggregate {fn!r}")


def _aggregate_output_type(fn: str, arg_type: str | None) -> str:
    if fn == "COUNT":
        return "int"
    if fn == "AVG":
        return "float"
    return arg_type  # SUM/MIN/MAX preserve the argument type


def execute_query(plan: QueryPlan, env: QueryEnv) -> Table:
    """Execute a validated plan against the environment's catalog."""
    table = env.catalog.get(plan.source)
    schema = table.schema

    # validate column references up front
    for pred in plan.predicates:
        if pred.column not in schema:
            raise ResolutionError(
                f"unknown column {pred.column!r} in table {plan.source!r}"
            )
    for key in plan.group_by:
        if key not in schema:
            raise ResolutionError(
                f"unknown GROUP BY column {key!r} in table {plan.source!r}"
            )
    for p in plan.projections:
        if isinstance(p.expr, ColumnRef):
            if p.expr.name not in schema:
                raise ResolutionError(
                    f"unknown column {p.expr.name!r} in table {plan.source!r}"
                )
        elif p.expr.arg != "*":
            if p.expr.arg not in schema:
                raise ResolutionError(
                    f"unknown column {p.expr.arg!r} in table {plan.source!r}"
                )
            if p.expr.fn in ("SUM", "AVG") and schema[p.expr.arg] not in (
                "int",
                "float",
            ):
                raise QueryTypeError(
                    f"{p.expr.fn} over non-numeric column {p.expr.arg!r} "
                    f"({schema[p.expr.arg]})"
                )

    out_names = [p.output_name for p in plan.projections]
    if len(set(out_names)) != len(out_names):
        raise QueryTypeError(f"duplicate output column names: {out_names}")

    # filter
    resolved = [
        (table.column_index(p.column), _OPS[p.op],
         _coerce_literal(p, schema[p.column], env))
        for p in plan.predicates
    ]
    kept = [
        row
        for row in table.rows
        if all(
            row[idx] is not None and op(row[idx], lit)
            for idx, op, lit in resolved
        )
    ]

    if plan.is_grouped:
        return _execute_grouped(plan, table, kept)
    return _execute_plain(plan, table, kept)


def _execute_plain(plan: QueryPlan, table: Table,
                   rows: list[tuple[Value, ...]]) -> Table:
    schema = table.schema
    for key in plan.order_by:
        if key.column not in schema:
            raise ResolutionError(
                f"unknown ORDER BY column {key.column!r} in table "
                f"{plan.source!r}"
            )
    if plan.order_by:
        rows = sort_rows(
            rows,
            [(table.column_index(k.column), k.ascending) for k in plan.order_by],
        )
    if plan.limit is not None:
        rows = rows[: plan.limit]

    indices = [table.column_index(p.expr.name) for p in plan.projections]
    columns = tuple(
        Column(p.output_name, schema[p.expr.name])
        for p in plan.projections
    )
    out_rows = tuple(tuple(row[i] for i in indices) for row in rows)
    return Table(name="result", columns=columns, rows=out_rows)


def _execute_grouped(plan: QueryPlan, table: Table,
                     rows: list[tuple[Value, ...]]) -> Table:
    schema = table.schema
    key_indices = [table.column_index(k) for k in plan.group_by]

    groups: dict[tuple, list[tuple[Value, ...]]] = {}
    for row in rows:
        key = tuple(row[i] for i in key_indices)
        groups.setdefault(key, []).append(row)

    columns = []
    for p in plan.projections:
        if isinstance(p.expr, ColumnRef):
            columns.append(Column(p.output_name, schema[p.expr.name]))
        else:
            arg_type = None if p.expr.arg == "*" else schema[p.expr.arg]
            columns.append(
                Column(p.output_name, _aggregate_output_type(p.expr.fn, arg_type))
            )

    out_rows = []
    for key, group_rows in groups.items():
        values: list[Value] = []
        for p in plan.projections:
            if isinstance(p.expr, ColumnRef):
                values.append(key[plan.group_by.index(p.expr.name)])
            else:
                col_idx = (
                    None if p.expr.arg == "*" else table.column_index(p.expr.arg)
                )
                values.append(_aggregate(p.expr.fn, p.expr.arg, group_rows, col_idx))
        out_rows.append(tuple(values))

    out_names = [p.output_name for p in plan.projections]
    if plan.order_by:
        for k in plan.order_by:
            if k.column not in out_names:
                raise ResolutionError(
                    f"ORDER BY column {k.column!r} is not an output column "
                    f"of the grouped query"
                )
        out_rows = sort_rows(
            out_rows,
            [(out_names.index(k.column), k.ascending) for k in plan.order_by],
        )
    if plan.limit is not None:
        out_rows = out_rows[: plan.limit]
    return Table(name="result", columns=tuple(columns), rows=tuple(out_rows))
