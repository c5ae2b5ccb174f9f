"""Session report model, deterministic rendering, and the audit trail.

The rendered report is a pure function of the session's logical events;
it never embeds wall-clock time, so identical inputs give identical
bytes. Wall-clock timestamps appear only as a "ts" field on audit
lines written to disk, and the replay fold ignores them: folding a
session's audit events rebuilds the same PlanReport and therefore the
same rendered text.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import ChainplanError


@dataclass(frozen=True)
class Plan:
    period: str                          # YYYY-MM being planned
    target: float
    unit: str
    growth_pct: float
    promo_budget_increase_pct: float | None
    sub_targets: tuple[float, ...]
    basis: str
    department: str = ""
    revision_of: str | None = None


@dataclass(frozen=True)
class TaskRecord:
    ordinal: int
    description: str
    category: str
    observation: str
    sql: str | None = None
    pipeline: str | None = None
    status: str = "done"                 # done | failed
    error: str | None = None


@dataclass(frozen=True)
class PlanReport:
    question: str
    intent: str
    sop_id: str | None
    backend: str
    tasks: tuple[TaskRecord, ...]
    replanning_updates: int
    iterations: int
    final_answer: str
    plan: Plan | None = None


# --- formatting ---------------------------------------------------------------

def format_money(value: float, unit: str) -> str:
    millions = value / 1_000_000
    if abs(millions) >= 1:
        whole = int(millions + 0.5) if millions >= 0 else -int(-millions + 0.5)
        return f"{unit} {whole} million"
    whole = int(value + 0.5) if value >= 0 else -int(-value + 0.5)
    return f"{unit} {whole:,}"


def format_pct(value: float) -> str:
    return f"{value:g}%"


def render_report(report: PlanReport) -> str:
    lines: list[str] = []
    lines.append("=== Supply Chain Plan Report ===")
    lines.append(f"Question: {report.question}")
    lines.append(f"Intent: {report.intent}")
    lines.append(f"Procedure: {report.sop_id or 'none'}")
    lines.append(f"Backend: {report.backend}")
    lines.append("")
    lines.append(f"Tasks executed: {len(report.tasks)}")
    for task in report.tasks:
        marker = " (failed)" if task.status == "failed" else ""
        lines.append(
            f"{task.ordinal}. [{task.category}] {task.description}{marker}"
        )
        if task.sql:
            lines.append(f"   SQL: {task.sql}")
        if task.pipeline:
            steps = [
                s for s in task.pipeline.splitlines()
                if s.strip() and not s.strip().startswith("#")
            ]
            lines.append(f"   Pipeline: {'; '.join(steps)}")
        if task.status == "failed":
            lines.append(f"   Error: {task.error or 'unknown'}")
        else:
            obs_lines = task.observation.splitlines() or [""]
            lines.append(f"   Observation: {obs_lines[0]}")
            lines.extend(f"   {extra}" for extra in obs_lines[1:])
    lines.append("")
    lines.append(f"Replanning updates: {report.replanning_updates}")
    lines.append(f"Iterations: {report.iterations}")
    if report.plan is not None:
        p = report.plan
        scope = f"{p.department} " if p.department else ""
        lines.append("")
        lines.append(f"Plan for {scope}{p.period}:")
        lines.append(f"  Target: {format_money(p.target, p.unit)}")
        lines.append(f"  Growth vs prior period: {format_pct(p.growth_pct)}")
        if p.promo_budget_increase_pct is not None:
            lines.append(
                f"  Promotion budget increase: "
                f"{format_pct(p.promo_budget_increase_pct)}"
            )
        if p.sub_targets:
            lines.append("  Sub-period targets:")
            for i, v in enumerate(p.sub_targets, start=1):
                lines.append(f"    {i}. {format_money(v, p.unit)}")
        lines.append(f"  Basis: {p.basis}")
        if p.revision_of:
            lines.append(f"  Revises: {p.revision_of}")
    lines.append("")
    lines.append(f"Final Answer: {report.final_answer}")
    return "\n".join(lines) + "\n"


def plan_to_dict(plan: Plan) -> dict:
    return {
        "period": plan.period,
        "department": plan.department,
        "target": plan.target,
        "unit": plan.unit,
        "growth_pct": plan.growth_pct,
        "promo_budget_increase_pct": plan.promo_budget_increase_pct,
        "sub_targets": list(plan.sub_targets),
        "basis": plan.basis,
        "revision_of": plan.revision_of,
    }


def report_to_dict(report: PlanReport) -> dict:
    return {
        "question": report.question,
        "intent": report.intent,
        "sop_id": report.sop_id,
        "backend": report.backend,
        "tasks": [
            {
                "ordinal": t.ordinal,
                "description": t.description,
                "category": t.category,
                "status": t.status,
                "observation": t.observation,
                "error": t.error,
                "sql": t.sql,
                "pipeline": t.pipeline,
            }
            for t in report.tasks
        ],
        "replanning_updates": report.replanning_updates,
        "iterations": report.iterations,
        "plan": plan_to_dict(report.plan) if report.plan else None,
        "final_answer": report.final_answer,
    }


# --- audit trail -----------------------------------------------------------------

class AuditLog:
    """Ordered event list; the session's replayable record."""

    def __init__(self) -> None:
        self.events: list[dict] = []

    def record(self, event: str, **payload) -> None:
        entry = {"event": event}
        entry.update(payload)
        self.events.append(entry)

    def write_jsonl(self, path: str | Path, timestamps: bool = True) -> None:
        now = time.time()
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.events:
                line = dict(entry)
                if timestamps:
                    line["ts"] = now
                fh.write(json.dumps(line, sort_keys=True) + "\n")


def load_events_jsonl(path: str | Path) -> list[dict]:
    events = []
    text = Path(path).read_text(encoding="utf-8")
    for i, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            events.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ChainplanError(f"{path}:{i}: bad audit line: {exc}") from None
    return events


def load_events_prefix(path: str | Path) -> tuple[list[dict], str | None]:
    """Events up to the first corrupt line, plus a warning naming that
    line (None when the whole file is clean). Replay uses this so a
    truncated or damaged audit log still renders its valid prefix."""
    events: list[dict] = []
    text = Path(path).read_text(encoding="utf-8")
    for i, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            parsed = json.loads(line)
        except json.JSONDecodeError as exc:
            return events, f"{path}:{i}: bad audit line: {exc.msg}"
        if not isinstance(parsed, dict) or "event" not in parsed:
            return events, f"{path}:{i}: audit line is not an event object"
        events.append(parsed)
    return events, None


def fold_events(events: list[dict]) -> PlanReport:
    """Rebuild the report from audit events, ignoring timestamps."""
    question = ""
    intent = ""
    sop_id: str | None = None
    backend = ""
    tasks: list[TaskRecord] = []
    replanning_updates = 0
    iterations = 0
    final_answer = ""
    plan: Plan | None = None

    current: dict | None = None

    def close_task() -> None:
        nonlocal current
        if current is not None:
            tasks.append(
                TaskRecord(
                    ordinal=current["ordinal"],
                    description=current["description"],
                    category=current["category"],
                    observation=current.get("observation", ""),
                    sql=current.get("sql"),
                    pipeline=current.get("pipeline"),
                    status=current.get("status", "done"),
                    error=current.get("error"),
                )
            )
        current = None

    for entry in events:
        kind = entry.get("event")
        if kind == "session_start":
            question = entry.get("question", "")
            backend = entry.get("backend", "")
        elif kind == "intent":
            intent = entry.get("label", "")
        elif kind == "sop":
            sop_id = entry.get("doc_id")
        elif kind == "task_start":
            close_task()
            current = {
                "ordinal": entry.get("ordinal", len(tasks) + 1),
                "description": entry.get("description", ""),
                "category": entry.get("category", ""),
            }
        elif kind == "sql" and current is not None:
            current["sql"] = entry.get("text")
        elif kind == "pipeline" and current is not None:
            current["pipeline"] = entry.get("text")
        elif kind == "observation" and current is not None:
            current["observation"] = entry.get("text", "")
        elif kind == "task_failed" and current is not None:
            current["status"] = "failed"
            current["error"] = entry.get("error", "")
        elif kind == "replan":
            replanning_updates += 1
        elif kind == "plan":
            plan = Plan(
                period=entry.get("period", ""),
                target=entry.get("target", 0.0),
                unit=entry.get("unit", ""),
                growth_pct=entry.get("growth_pct", 0.0),
                promo_budget_increase_pct=entry.get("promo_budget_increase_pct"),
                sub_targets=tuple(entry.get("sub_targets", ())),
                basis=entry.get("basis", ""),
                department=entry.get("department", ""),
                revision_of=entry.get("revision_of"),
            )
        elif kind == "final":
            final_answer = entry.get("answer", "")
        elif kind == "session_end":
            iterations = entry.get("iterations", 0)
    close_task()

    return PlanReport(
        question=question,
        intent=intent,
        sop_id=sop_id,
        backend=backend,
        tasks=tuple(tasks),
        replanning_updates=replanning_updates,
        iterations=iterations,
        final_answer=final_answer,
        plan=plan,
    )
