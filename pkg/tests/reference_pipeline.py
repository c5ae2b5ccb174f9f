"""Naive reference interpreter for analysis pipelines (test oracle).

Evaluates the expression AST recursively and every step with plain loops
over row dicts; no evaluation code is shared with the engine. Mirrored
contract:
  - null propagates through arithmetic, unary minus, and abs/round/year/
    month; a comparison with a null operand is false; and/or/not read
    null as false
  - round() is half away from zero and yields a float; the arithmetic is
    abs-scale-shift-truncate so results match the engine bit for bit
  - if() evaluates only the taken branch; a null condition takes the
    else branch
  - Filter keeps rows whose predicate is truthy; Transform rebuilds each
    row (new columns append, overwrites keep position); Groupby keeps
    first-seen key order with the null-skipping aggregates; Sort is a
    stable comparator sort, nulls last either direction
"""

from __future__ import annotations

from chainplan.dates import date_month, date_year
from chainplan.expr import Binary, Call, Col, Lit, Unary
from chainplan.pipeline import FilterStep, GroupbyStep, SortStep, TransformStep

from reference_sql import make_comparator


def _truth(v) -> bool:
    return bool(v) if v is not None else False


def _round_half_away(x: float, digits: int) -> float:
    scale = 10 ** digits
    magnitude = int(abs(x) * scale + 0.5) / scale
    return -magnitude if x < 0 else magnitude


def eval_node(node, row):
    if isinstance(node, Lit):
        return node.value
    if isinstance(node, Col):
        return row[node.name]
    if isinstance(node, Unary):
        v = eval_node(node.operand, row)
        if node.op == "-":
            return None if v is None else -v
        return not _truth(v)
    if isinstance(node, Binary):
        op = node.op
        if op == "and":
            return _truth(eval_node(node.left, row)) and _truth(
                eval_node(node.right, row)
            )
        if op == "or":
            return _truth(eval_node(node.left, row)) or _truth(
                eval_node(node.right, row)
            )
        left = eval_node(node.left, row)
        right = eval_node(node.right, row)
        if op in ("+", "-", "*", "/"):
            if left is None or right is None:
                return None
            if op == "+":
                return left + right
            if op == "-":
                return left - right
            if op == "*":
                return left * right
            return left / right
        # comparison
        if left is None or right is None:
            return False
        if op == "==":
            return left == right
        if op == "!=":
            return left != right
        if op == "<":
            return left < right
        if op == "<=":
            return left <= right
        if op == ">":
            return left > right
        return left >= right
    assert isinstance(node, Call)
    if node.fn == "if":
        cond = eval_node(node.args[0], row)
        branch = node.args[1] if _truth(cond) else node.args[2]
        return eval_node(branch, row)
    v = eval_node(node.args[0], row)
    if v is None:
        return None
    if node.fn == "abs":
        return abs(v)
    if node.fn == "round":
        digits = node.args[1].value if len(node.args) > 1 else 0
        return _round_half_away(float(v), digits)
    if node.fn == "year":
        return date_year(v)
    if node.fn == "month":
        return date_month(v)
    raise AssertionError(f"unhandled function {node.fn!r}")


def _aggregate(fn, column, bucket):
    if fn == "count":
        if column == "*":
            return len(bucket)
        return len([r for r in bucket if r[column] is not None])
    values = [r[column] for r in bucket if r[column] is not None]
    if not values:
        return None
    if fn == "sum":
        return sum(values)
    if fn == "avg":
        return float(sum(values)) / len(values)
    if fn == "min":
        best = values[0]
        for v in values[1:]:
            if v < best:
                best = v
        return best
    assert fn == "max"
    best = values[0]
    for v in values[1:]:
        if v > best:
            best = v
    return best


def run_reference(pipeline, table):
    """Interpret the pipeline naively; returns (column_names, rows)."""
    names = list(table.column_names)
    rows = [dict(zip(names, r)) for r in table.rows]

    for step in pipeline.steps:
        if isinstance(step, FilterStep):
            rows = [r for r in rows if _truth(eval_node(step.predicate, r))]
        elif isinstance(step, TransformStep):
            rebuilt = []
            for r in rows:
                r2 = dict(r)
                r2[step.name] = eval_node(step.expr, r)
                rebuilt.append(r2)
            rows = rebuilt
            if step.name not in names:
                names.append(step.name)
        elif isinstance(step, GroupbyStep):
            order: list[tuple] = []
            buckets: dict[tuple, list[dict]] = {}
            for r in rows:
                key = tuple(r[k] for k in step.keys)
                if key not in buckets:
                    buckets[key] = []
                    order.append(key)
                buckets[key].append(r)
            names = list(step.keys) + [a.output_name for a in step.aggs]
            rows = []
            for key in order:
                rec = dict(zip(step.keys, key))
                for a in step.aggs:
                    rec[a.output_name] = _aggregate(a.fn, a.column, buckets[key])
                rows.append(rec)
        else:
            assert isinstance(step, SortStep)
            cmp_key = make_comparator(
                [(k.column, k.ascending) for k in step.keys]
            )
            rows = sorted(rows, key=cmp_key)

    return names, [tuple(r[n] for n in names) for r in rows]
