"""Row-expression language used by pipeline Filter and Transform steps.

Grammar, loosest binding first:

    or     := and { 'or' and }
    and    := not { 'and' not }
    not    := 'not' not | cmp
    cmp    := add [ (== | != | < | <= | > | >=) add ]
    add    := mul { (+ | -) mul }
    mul    := unary { (* | /) unary }
    unary  := - unary | atom
    atom   := number | 'text' | d'YYYY-MM-DD' | true | false
            | ident | fn '(' args ')' | '(' expr ')'
    fn     := abs | round | year | month | if

Typing and evaluation rules:
  - every expression has a static kind: int, float, string, date, bool
  - + - * give int only when both sides are int; / is always float
  - comparisons accept numeric pairs or same-kind operands, yield bool
  - null propagates through arithmetic and function calls; a comparison
    with a null operand is false; and/or/not read null as false
  - and/or evaluate both sides; if() evaluates only the taken branch,
    with a null condition taking the else branch
  - round(x[, digits]) rounds half away from zero and yields float;
    digits must be a non-negative int literal
  - division by a literal zero is rejected statically; a zero divisor
    at runtime raises with the offending row index
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass
from typing import Callable

from .dates import date_month, date_year, format_iso_date, parse_iso_date
from .errors import ExprRuntimeError, ExprSyntaxError, ExprTypeError
from .table import Value

NUMERIC = ("int", "float")


# --- AST --------------------------------------------------------------------

@dataclass(frozen=True)
class Lit:
    value: Value
    kind: str  # int | float | string | date | bool


@dataclass(frozen=True)
class Col:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # '-' | 'not'
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / == != < <= > >= and or
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str  # abs | round | year | month | if
    args: tuple["Expr", ...]


Expr = Lit | Col | Unary | Binary | Call

_FUNCTIONS = ("abs", "round", "year", "month", "if")


# --- lexer ------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<dlit>[dD]'(\d{4}-\d{2}-\d{2})')
  | (?P<number>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<string>'(?:[^']|'')*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|<=|>=|<|>)
  | (?P<punct>[()+\-*/,])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise ExprSyntaxError(f"unexpected character {text[i]!r}", position=i)
        i = m.end()
        if m.lastgroup == "ws":
            continue
        tokens.append(_Token(m.lastgroup or "punct", m.group(), m.start()))
    tokens.append(_Token("eof", "<end>", len(text)))
    return tokens


# --- parser -----------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.tokens = _lex(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def at_word(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text.lower() == word

    def parse(self) -> Expr:
        expr = self.or_expr()
        tail = self.peek()
        if tail.kind != "eof":
            raise ExprSyntaxError(
                f"unexpected token {tail.text!r}", position=tail.pos
            )
        return expr

    def or_expr(self) -> Expr:
        node = self.and_expr()
        while self.at_word("or"):
            self.next()
            node = Binary("or", node, self.and_expr())
        return node

    def and_expr(self) -> Expr:
        node = self.not_expr()
        while self.at_word("and"):
            self.next()
            node = Binary("and", node, self.not_expr())
        return node

    def not_expr(self) -> Expr:
        if self.at_word("not"):
            self.next()
            return Unary("not", self.not_expr())
        return self.cmp_expr()

    def cmp_expr(self) -> Expr:
        node = self.add_expr()
        tok = self.peek()
        if tok.kind == "op":
            self.next()
            return Binary(tok.text, node, self.add_expr())
        return node

    def add_expr(self) -> Expr:
        node = self.mul_expr()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            node = Binary(op, node, self.mul_expr())
        return node

    def mul_expr(self) -> Expr:
        node = self.unary_expr()
        while self.peek().text in ("*", "/"):
            op = self.next().text
            node = Binary(op, node, self.unary_expr())
        return node

    def unary_expr(self) -> Expr:
        if self.peek().text == "-":
            self.next()
            operand = self.unary_expr()
            if isinstance(operand, Lit) and operand.kind in NUMERIC:
                return Lit(-operand.value, operand.kind)
            return Unary("-", operand)
        return self.atom()

    def atom(self) -> Expr:
        tok = self.next()
        if tok.kind == "dlit":
            iso = tok.text[2:-1]
            try:
                days = parse_iso_date(iso)
            except ValueError as exc:
                raise ExprSyntaxError(str(exc), position=tok.pos) from None
            return Lit(days, "date")
        if tok.kind == "number":
            if "." in tok.text or "e" in tok.text or "E" in tok.text:
                return Lit(float(tok.text), "float")
            return Lit(int(tok.text), "int")
        if tok.kind == "string":
            return Lit(tok.text[1:-1].replace("''", "'"), "string")
        if tok.kind == "ident":
            word = tok.text.lower()
            if word == "true":
                return Lit(True, "bool")
            if word == "false":
                return Lit(False, "bool")
            if word in _FUNCTIONS:
                if self.peek().text != "(":
                    raise ExprSyntaxError(
                        f"{word} must be called as {word}(...)",
                        position=self.peek().pos,
                    )
                self.next()
                args: list[Expr] = []
                if self.peek().text != ")":
                    args.append(self.or_expr())
                    while self.peek().text == ",":
                        self.next()
                        args.append(self.or_expr())
                close = self.next()
                if close.text != ")":
                    raise ExprSyntaxError(
                        f"expected ')', got {close.text!r}", position=close.pos
                    )
                return Call(word, tuple(args))
            if word in ("and", "or", "not"):
                raise ExprSyntaxError(
                    f"misplaced keyword {tok.text!r}", position=tok.pos
                )
            return Col(tok.text)
        if tok.text == "(":
            node = self.or_expr()
            close = self.next()
            if close.text != ")":
                raise ExprSyntaxError(
                    f"expected ')', got {close.text!r}", position=close.pos
                )
            return node
        raise ExprSyntaxError(f"unexpected token {tok.text!r}", position=tok.pos)


def parse_expr(text: str) -> Expr:
    """Parse an expression string into its AST."""
    return _Parser(text).parse()


# --- rendering --------------------------------------------------------------

_PRECEDENCE = {
    "or": 1, "and": 2,
    "==": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5, "*": 6, "/": 6,
}


def _prec(expr: Expr) -> int:
    if isinstance(expr, Binary):
        return _PRECEDENCE[expr.op]
    if isinstance(expr, Unary):
        return 3 if expr.op == "not" else 7
    return 8


def render_expr(expr: Expr) -> str:
    """Canonical text form; parse_expr(render_expr(e)) == e."""
    if isinstance(expr, Lit):
        if expr.kind == "date":
            return f"d'{format_iso_date(expr.value)}'"
        if expr.kind == "bool":
            return "true" if expr.value else "false"
        if expr.kind == "string":
            return "'" + expr.value.replace("'", "''") + "'"
        return repr(expr.value)
    if isinstance(expr, Col):
        return expr.name
    if isinstance(expr, Unary):
        inner = render_expr(expr.operand)
        mine = _prec(expr)
        if _prec(expr.operand) < mine:
            inner = f"({inner})"
        return f"not {inner}" if expr.op == "not" else f"-{inner}"
    if isinstance(expr, Binary):
        mine = _PRECEDENCE[expr.op]
        left = render_expr(expr.left)
        right = render_expr(expr.right)
        # comparisons do not chain, so a comparison operand needs parens
        if _prec(expr.left) < mine or (mine == 4 and _prec(expr.left) == 4):
            left = f"({left})"
        if _prec(expr.right) <= mine:
            right = f"({right})"
        return f"{left} {expr.op} {right}"
    args = ", ".join(render_expr(a) for a in expr.args)
    return f"{expr.fn}({args})"


def expr_columns(expr: Expr) -> frozenset[str]:
    """Column names the expression reads."""
    if isinstance(expr, Col):
        return frozenset((expr.name,))
    if isinstance(expr, Unary):
        return expr_columns(expr.operand)
    if isinstance(expr, Binary):
        return expr_columns(expr.left) | expr_columns(expr.right)
    if isinstance(expr, Call):
        out: frozenset[str] = frozenset()
        for a in expr.args:
            out |= expr_columns(a)
        return out
    return frozenset()


# --- compilation (typing + evaluation) --------------------------------------

EvalFn = Callable[[dict[str, Value], int], Value]


@dataclass(frozen=True)
class CompiledExpr:
    kind: str
    fn: EvalFn


def _round_half_away(x: float, digits: int) -> float:
    scale = 10 ** digits
    scaled = abs(x) * scale
    result = int(scaled + 0.5) / scale
    return -result if x < 0 else result


def compile_expr(expr: Expr, schema: dict[str, str]) -> CompiledExpr:
    """Type-check against a column schema and build an evaluator."""
    if isinstance(expr, Lit):
        v = expr.value
        return CompiledExpr(expr.kind, lambda row, idx: v)

    if isinstance(expr, Col):
        if expr.name not in schema:
            raise ExprTypeError(f"unknown column {expr.name!r}")
        name = expr.name
        return CompiledExpr(schema[name], lambda row, idx: row[name])

    if isinstance(expr, Unary):
        inner = compile_expr(expr.operand, schema)
        if expr.op == "-":
            if inner.kind not in NUMERIC:
                raise ExprTypeError(f"unary - needs a number, got {inner.kind}")
            f = inner.fn
            return CompiledExpr(
                inner.kind,
                lambda row, idx: None if (v := f(row, idx)) is None else -v,
            )
        if inner.kind != "bool":
            raise ExprTypeError(f"not needs a bool, got {inner.kind}")
        f = inner.fn
        return CompiledExpr("bool", lambda row, idx: not bool(f(row, idx)))

    if isinstance(expr, Binary):
        return _compile_binary(expr, schema)

    return _compile_call(expr, schema)


def _compile_binary(expr: Binary, schema: dict[str, str]) -> CompiledExpr:
    left = compile_expr(expr.left, schema)
    right = compile_expr(expr.right, schema)
    op = expr.op
    lf, rf = left.fn, right.fn

    if op in ("and", "or"):
        for side in (left, right):
            if side.kind != "bool":
                raise ExprTypeError(f"{op} needs bool operands, got {side.kind}")
        if op == "and":
            return CompiledExpr(
                "bool",
                lambda row, idx: bool(lf(row, idx)) and bool(rf(row, idx)),
            )
        return CompiledExpr(
            "bool",
            lambda row, idx: bool(lf(row, idx)) or bool(rf(row, idx)),
        )

    if op in ("==", "!=", "<", "<=", ">", ">="):
        numeric_pair = left.kind in NUMERIC and right.kind in NUMERIC
        if not numeric_pair and left.kind != right.kind:
            raise ExprTypeError(
                f"cannot compare {left.kind} with {right.kind}"
            )
        py_op = {
            "==": operator.eq, "!=": operator.ne, "<": operator.lt,
            "<=": operator.le, ">": operator.gt, ">=": operator.ge,
        }[op]

        def cmp(row, idx, lf=lf, rf=rf, py_op=py_op):
            a = lf(row, idx)
            b = rf(row, idx)
            if a is None or b is None:
                return False
            return py_op(a, b)

        return CompiledExpr("bool", cmp)

    # arithmetic
    for side in (left, right):
        if side.kind not in NUMERIC:
            raise ExprTypeError(f"{op} needs numbers, got {side.kind}")
    if op == "/":
        if isinstance(expr.right, Lit) and expr.right.value == 0:
            raise ExprTypeError("division by literal zero")

        def div(row, idx, lf=lf, rf=rf):
            a = lf(row, idx)
            b = rf(row, idx)
            if a is None or b is None:
                return None
            if b == 0:
                raise ExprRuntimeError("division by zero", row_index=idx)
            return a / b

        return CompiledExpr("float", div)

    kind = "int" if left.kind == "int" and right.kind == "int" else "float"
    py_op = {"+": operator.add, "-": operator.sub, "*": operator.mul}[op]

    def arith(row, idx, lf=lf, rf=rf, py_op=py_op, kind=kind):
        a = lf(row, idx)
        b = rf(row, idx)
        if a is None or b is None:
            return None
        v = py_op(a, b)
        return float(v) if kind == "float" else v

    return CompiledExpr(kind, arith)


def _compile_call(expr: Call, schema: dict[str, str]) -> CompiledExpr:
    fn = expr.fn

    def arity(n: int) -> None:
        if len(expr.args) != n:
            raise ExprTypeError(f"{fn} takes {n} argument(s), got {len(expr.args)}")

    if fn == "abs":
        arity(1)
        arg = compile_expr(expr.args[0], schema)
        if arg.kind not in NUMERIC:
            raise ExprTypeError(f"abs needs a number, got {arg.kind}")
        f = arg.fn
        return CompiledExpr(
            arg.kind,
            lambda row, idx: None if (v := f(row, idx)) is None else abs(v),
        )

    if fn == "round":
        if len(expr.args) not in (1, 2):
            raise ExprTypeError(f"round takes 1 or 2 arguments, got {len(expr.args)}")
        arg = compile_expr(expr.args[0], schema)
        if arg.kind not in NUMERIC:
            raise ExprTypeError(f"round needs a number, got {arg.kind}")
        digits = 0
        if len(expr.args) == 2:
            d = expr.args[1]
            if not (isinstance(d, Lit) and d.kind == "int" and d.value >= 0):
                raise ExprTypeError(
                    "round digits must be a non-negative int literal"
                )
            digits = d.value
        f = arg.fn
        return CompiledExpr(
            "float",
            lambda row, idx: (
                None
                if (v := f(row, idx)) is None
                else _round_half_away(float(v), digits)
            ),
        )

    if fn in ("year", "month"):
        arity(1)
        arg = compile_expr(expr.args[0], schema)
        if arg.kind != "date":
            raise ExprTypeError(f"{fn} needs a date, got {arg.kind}")
        extract = date_year if fn == "year" else date_month
        f = arg.fn
        return CompiledExpr(
            "int",
            lambda row, idx: (
                None if (v := f(row, idx)) is None else extract(v)
            ),
        )

    if fn == "if":
        arity(3)
        cond = compile_expr(expr.args[0], schema)
        then = compile_expr(expr.args[1], schema)
        other = compile_expr(expr.args[2], schema)
        if cond.kind != "bool":
            raise ExprTypeError(f"if condition must be bool, got {cond.kind}")
        if then.kind == other.kind:
            kind = then.kind
        elif then.kind in NUMERIC and other.kind in NUMERIC:
            kind = "float"
        else:
            raise ExprTypeError(
                f"if branches disagree: {then.kind} vs {other.kind}"
            )
        cf, tf, of = cond.fn, then.fn, other.fn
        unify = kind == "float"

        def pick(row, idx, cf=cf, tf=tf, of=of, unify=unify):
            branch = tf if bool(cf(row, idx)) else of
            v = branch(row, idx)
            if unify and isinstance(v, int) and not isinstance(v, bool):
                return float(v)
            return v

        return CompiledExpr(kind, pick)

    raise ExprTypeError(f"unknown function {fn!r}")


def infer_type(expr: Expr, schema: dict[str, str]) -> str:
    """Static kind of the expression under the schema."""
    return compile_expr(expr, schema).kind


def eval_expr(expr: Expr, row: dict[str, Value], schema: dict[str, str],
              row_index: int = 0) -> Value:
    """One-shot evaluation convenience; compile once for hot loops."""
    return compile_expr(expr, schema).fn(row, row_index)
