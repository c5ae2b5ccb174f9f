"""Brute-force reference evaluator for the query subset.

Used as an independent oracle: rows live in dicts, every clause is a plain
loop, and ordering goes through a comparator rather than key tuples. The
only shared pieces are the plan dataclasses themselves and the ISO date
helper.

Semantics mirrored from the engine's documented contract:
  - WHERE is a conjunction; a null cell fails every comparison
  - sysdate(k) resolves to reference_date + k (epoch days)
  - grouped output keeps first-seen key order; empty input gives zero rows
    even for the no-key whole-table aggregation
  - SUM/AVG/MIN/MAX skip nulls and give null over an empty value list;
    COUNT(*) counts rows, COUNT(col) counts non-null cells
  - AVG is float(sum)/count
  - ORDER BY is a stable multi-key sort with nulls last either direction;
    grouped queries sort on output columns, plain queries on source columns
  - LIMIT applies after ordering
"""

from __future__ import annotations

import functools

from chainplan.dates import parse_iso_date
from chainplan.sql import Aggregate, ColumnRef, QueryEnv, QueryPlan, SysDate


def _resolve_literal(pred, col_type, env):
    v = pred.value
    if isinstance(v, SysDate):
        return env.reference_date + v.offset_days
    if col_type == "date" and isinstance(v, str):
        return parse_iso_date(v)
    return v


def _passes(cell, op, lit):
    if cell is None:
        return False
    if op == "=":
        return cell == lit
    if op == "!=":
        return cell != lit
    if op == "<":
        return cell < lit
    if op == "<=":
        return cell <= lit
    if op == ">":
        return cell > lit
    if op == ">=":
        return cell >= lit
    raise AssertionError(f"unhandled op {op!r}")


def make_comparator(keys):
    """keys: list of (column_name, ascending). Nulls sort last."""

    def cmp(a, b):
        for name, ascending in keys:
            va, vb = a[name], b[name]
            if va is None and vb is None:
                continue
            if va is None:
                return 1
            if vb is None:
                return -1
            if va == vb:
                continue
            less = va < vb
            if ascending:
                return -1 if less else 1
            return 1 if less else -1
        return 0

    return functools.cmp_to_key(cmp)


def _aggregate(fn, arg, bucket):
    if fn == "COUNT":
        if arg == "*":
            return len(bucket)
        return len([r for r in bucket if r[arg] is not None])
    values = [r[arg] for r in bucket if r[arg] is not None]
    if not values:
        return None
    if fn == "SUM":
        return sum(values)
    if fn == "AVG":
        return float(sum(values)) / len(values)
    if fn == "MIN":
        best = values[0]
        for v in values[1:]:
            if v < best:
                best = v
        return best
    if fn == "MAX":
        best = values[0]
        for v in values[1:]:
            if v > best:
                best = v
        return best
    raise AssertionError(f"unhandled aggregate {fn!r}")


def run_reference(plan: QueryPlan, env: QueryEnv):
    """Evaluate the plan naively; returns (output_names, rows as tuples)."""
    table = env.catalog.get(plan.source)
    names = list(table.column_names)
    types = {c.name: c.type for c in table.columns}
    rows = [dict(zip(names, r)) for r in table.rows]

    kept = []
    for row in rows:
        ok = True
        for pred in plan.predicates:
            lit = _resolve_literal(pred, types[pred.column], env)
            if not _passes(row[pred.column], pred.op, lit):
                ok = False
                break
        if ok:
            kept.append(row)

    out_names = [p.output_name for p in plan.projections]
    grouped = bool(plan.group_by) or any(
        isinstance(p.expr, Aggregate) for p in plan.projections
    )

    if grouped:
        order: list[tuple] = []
        buckets: dict[tuple, list[dict]] = {}
        for row in kept:
            key = tuple(row[k] for k in plan.group_by)
            if key not in buckets:
                buckets[key] = []
                order.append(key)
            buckets[key].append(row)
        out_rows = []
        for key in order:
            bucket = buckets[key]
            rec = {}
            for p in plan.projections:
                if isinstance(p.expr, ColumnRef):
                    rec[p.output_name] = bucket[0][p.expr.name]
                else:
                    rec[p.output_name] = _aggregate(p.expr.fn, p.expr.arg, bucket)
            out_rows.append(rec)
        if plan.order_by:
            cmp_key = make_comparator(
                [(k.column, k.ascending) for k in plan.order_by]
            )
            out_rows = sorted(out_rows, key=cmp_key)
        if plan.limit is not None:
            out_rows = out_rows[: plan.limit]
        return out_names, [tuple(r[n] for n in out_names) for r in out_rows]

    if plan.order_by:
        cmp_key = make_comparator([(k.column, k.ascending) for k in plan.order_by])
        kept = sorted(kept, key=cmp_key)
    if plan.limit is not None:
        kept = kept[: plan.limit]
    projected = [
        tuple(r[p.expr.name] for p in plan.projections) for r in kept
    ]
    return out_names, projected


def typed_rows(rows):
    """Pair each cell with its concrete type so 1 and 1.0 stay distinct."""
    return [tuple((type(v).__name__, v) for v in row) for row in rows]
