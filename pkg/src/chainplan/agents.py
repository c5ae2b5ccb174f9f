"""Intent classification and the plan, execute, observe, replan loop.

The orchestrator owns the session: it classifies the question, fetches
the best-matching procedure document, then alternates between asking
the planning backend for the task list (or its update) and executing
the named next task. Analysis tasks run SQL against the catalog and a
sorting pipeline over the result; feature tasks run a deterministic
aggregation pipeline; plan formulation is computed locally from the
historical series and the toolbox, never delegated to the backend.

Loop accounting: every backend planning call is one iteration. A task
list update counts as a replanning update; the first (original) list
and the final answer do not. Tasks already executed are pruned from
any updated list, so a finished task can never run twice, and a
planner that never reaches a final answer is cut off at the configured
iteration cap.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .config import SessionConfig
from .dates import Period, parse_iso_date
from .errors import (
    BackendError,
    ChainplanError,
    ClassificationError,
    GatewayError,
    NonTerminationError,
    OrchestrationError,
    TranscriptError,
)
from .expr import Binary, Col, Lit
from .gateway import (
    TEMPLATES,
    Backend,
    parse_turn,
    prompt_digest,
    render_template,
)
from .knowledge import KnowledgeStore
from .pipeline import (
    AggSpec,
    FilterStep,
    GroupbyStep,
    Pipeline,
    SortKey,
    SortStep,
    Step,
    render_pipeline,
    run_pipeline,
)
from .report import (
    AuditLog,
    Plan,
    PlanReport,
    TaskRecord,
    format_money,
    format_pct,
    plan_to_dict,
)
from .sql import (
    Aggregate,
    ColumnRef,
    Predicate,
    Projection,
    QueryEnv,
    QueryPlan,
    execute_query,
    parse_query,
    render_sql,
)
from .table import Catalog, Table
from .toolbox import Toolbox, standard_toolbox

INTENT_LABELS = (
    "plan_formulation",
    "instock_monitoring",
    "turnover_diagnostics",
    "replenishment_recommendation",
)

# Ordered: the first matching rule decides the label.
_INTENT_RULES = (
    ("sales plan", re.compile(r"sales\s+plan", re.I), "plan_formulation"),
    ("formulate plan", re.compile(r"\bformulate\b.*\bplan\b", re.I),
     "plan_formulation"),
    ("in-stock", re.compile(r"\bin[-\s]?stock\b|\bstock\s?-?outs?\b", re.I),
     "instock_monitoring"),
    ("turnover", re.compile(r"\bturnover\b", re.I), "turnover_diagnostics"),
    ("replenishment",
     re.compile(r"\breplenish\w*\b|\border(ing|s)?\b", re.I),
     "replenishment_recommendation"),
)


@dataclass(frozen=True)
class IntentResult:
    label: str
    confidence: float
    matched_rules: tuple[str, ...]


def classify_intent(question: str, backend: Backend | None = None,
                    retries: int = 2) -> IntentResult:
    """Keyword rules first (confidence 1.0); otherwise ask the backend,
    retrying a bounded number of times before giving up."""
    if not question.strip():
        raise ClassificationError("empty question")
    matched = tuple(
        name for name, rx, _ in _INTENT_RULES if rx.search(question)
    )
    for name, rx, label in _INTENT_RULES:
        if rx.search(question):
            return IntentResult(label, 1.0, matched)
    if backend is None:
        raise ClassificationError(f"no intent rule matched: {question!r}")
    prompt = render_template(TEMPLATES["intent"], {"Question": question})
    last = ""
    for _ in range(retries + 1):
        try:
            reply = backend.complete(prompt, "intent")
        except BackendError as exc:
            raise ClassificationError(
                f"no intent rule matched and the backend cannot classify: {exc}"
            ) from None
        last = reply
        stripped = reply.strip()
        if stripped:
            label = stripped.splitlines()[-1].strip().strip(".").lower()
            if label in INTENT_LABELS:
                return IntentResult(label, 0.9, ())
    raise ClassificationError(f"backend reply is not an intent label: {last!r}")


_ANALYSIS_RE = re.compile(r"\b(analy[sz]\w*|examin\w*|investigat\w*)\b", re.I)
_FORMULATE_RE = re.compile(r"\b(formulat\w*|draft\w*|devise\w*|plan)\b", re.I)


def categorize_task(description: str) -> str:
    """Analysis verbs win over plan words, so 'Analyze the sales plan
    gap' still lands on the analysis path."""
    if _ANALYSIS_RE.search(description):
        return "historical_sales_analysis"
    if _FORMULATE_RE.search(description):
        return "plan_formulation"
    return "feature_processing"


def normalize_task(description: str) -> str:
    return re.sub(r"\s+", " ", description.strip().lower()).rstrip(".")


@dataclass(frozen=True)
class Task:
    ordinal: int
    description: str
    category: str


@dataclass
class TaskOutcome:
    observation: str = ""
    sql: str | None = None
    pipeline_text: str | None = None
    plan: Plan | None = None
    failed: bool = False
    error: str | None = None


def describe_catalog(catalog: Catalog) -> str:
    lines = []
    for name in catalog.names():
        table = catalog.get(name)
        cols = ", ".join(f"{c.name} {c.type}" for c in table.columns)
        lines.append(f"- {name}({cols}); {len(table.rows)} rows")
    return "\n".join(lines)


def extract_sql(reply: str) -> str:
    """Pull the SQL statement out of a backend reply, tolerating code
    fences and a trailing semicolon."""
    text = reply.strip()
    if text.startswith("```"):
        body = [
            line
            for line in text.splitlines()[1:]
            if not line.strip().startswith("```")
        ]
        text = "\n".join(body).strip()
    m = re.search(r"\bselect\b", text, re.IGNORECASE)
    if m is None:
        raise OrchestrationError(
            "no SELECT statement in execution reply", raw_reply=reply
        )
    return text[m.start():].strip().rstrip(";").strip()


def _fmt_number(v) -> str:
    if isinstance(v, int):
        return str(v)
    return f"{v:.10g}"


def summarize_table(table: Table) -> str:
    """Deterministic observation text for a query result."""
    cols = ", ".join(f"{c.name}:{c.type}" for c in table.columns)
    lines = [f"Retrieved {len(table.rows)} rows ({cols})."]
    for i, col in enumerate(table.columns):
        if col.type not in ("int", "float") or col.name in ("year", "month"):
            continue
        values = [r[i] for r in table.rows if r[i] is not None]
        if not values:
            continue
        lines.append(
            f"{col.name}: first={_fmt_number(values[0])}, "
            f"last={_fmt_number(values[-1])}, total={_fmt_number(sum(values))}"
        )
    return "\n".join(lines)


class Orchestrator:
    def __init__(self, config: SessionConfig, catalog: Catalog,
                 backend: Backend, store: KnowledgeStore | None = None,
                 toolbox: Toolbox | None = None):
        self.config = config
        self.catalog = catalog
        self.backend = backend
        self.store = store
        self.toolbox = toolbox or standard_toolbox()
        self.env = QueryEnv(
            reference_date=parse_iso_date(config.reference_date),
            catalog=catalog,
        )

    # --- session loop ---------------------------------------------------

    def run_session(self, question: str) -> tuple[PlanReport, AuditLog]:
        audit = AuditLog()
        audit.record(
            "session_start", question=question, backend=self.backend.name
        )
        try:
            return self._session(question, audit)
        except ChainplanError as exc:
            # let callers persist the partial trail of a failed session
            if not getattr(exc, "events", None):
                exc.events = list(audit.events)
            raise

    def _session(
        self, question: str, audit: AuditLog
    ) -> tuple[PlanReport, AuditLog]:
        intent = classify_intent(
            question, self.backend, retries=self.config.retries
        )
        audit.record(
            "intent",
            label=intent.label,
            confidence=intent.confidence,
            matched_rules=list(intent.matched_rules),
        )

        sop_id: str | None = None
        sop_text = ""
        if self.store is not None and len(self.store) > 0:
            matches = self.store.retrieve(question, k=1)
            if matches and matches[0].score > 0.0:
                sop_id = matches[0].doc_id
                sop_text = self.store.get(sop_id).body
                audit.record("sop", doc_id=sop_id, score=matches[0].score)

        pending: list[Task] = []
        done_norms: set[str] = set()
        records: list[TaskRecord] = []
        listed = False
        replans = 0
        iterations = 0
        last_observation = ""
        final_answer = ""
        plan_obj: Plan | None = None

        while True:
            if iterations >= self.config.max_iterations:
                raise NonTerminationError(
                    f"no final answer after {iterations} iterations"
                )
            iterations += 1
            task_list_text = "\n".join(
                f"{i}. {t.description}" for i, t in enumerate(pending, start=1)
            )
            prompt = render_template(
                TEMPLATES["task_planning"],
                {
                    "SOP RAG": sop_text,
                    "Task list": task_list_text,
                    "Observation": last_observation,
                    "Question": question,
                },
            )
            audit.record(
                "prompt", purpose="planning", digest=prompt_digest(prompt)
            )
            reply = self.backend.complete(prompt, "planning")
            audit.record("reply", purpose="planning", text=reply)
            attempt = 0
            while True:
                try:
                    turn = parse_turn(reply)
                    break
                except TranscriptError as exc:
                    attempt += 1
                    if attempt > self.config.retries:
                        raise OrchestrationError(
                            f"planner reply not parseable after "
                            f"{attempt} attempts: {exc}",
                            raw_reply=reply,
                        ) from None
                    audit.record(
                        "retry", purpose="planning", attempt=attempt,
                        reason=str(exc),
                    )
                    reply = self.backend.complete(prompt, "planning")
                    audit.record("reply", purpose="planning", text=reply)

            if turn.final_answer is not None:
                final_answer = turn.final_answer
                audit.record("final", answer=final_answer)
                break

            if turn.original_tasks is not None:
                if listed:
                    raise OrchestrationError(
                        "planner sent a second original task list",
                        raw_reply=reply,
                    )
                listed = True
                pending = [
                    Task(i, d, categorize_task(d))
                    for i, d in enumerate(turn.original_tasks, start=1)
                ]
                audit.record(
                    "task_list",
                    kind="original",
                    tasks=[t.description for t in pending],
                )
            elif turn.updated_tasks is not None:
                if not listed:
                    raise OrchestrationError(
                        "task list update before any original list",
                        raw_reply=reply,
                    )
                replans += 1
                kept = [
                    d
                    for d in turn.updated_tasks
                    if normalize_task(d) not in done_norms
                ]
                base = len(records)
                pending = [
                    Task(base + i, d, categorize_task(d))
                    for i, d in enumerate(kept, start=1)
                ]
                audit.record(
                    "replan",
                    kind="updated",
                    tasks=[t.description for t in pending],
                )

            if turn.next_task is None:
                raise OrchestrationError(
                    "planner gave neither a next task nor a final answer",
                    raw_reply=reply,
                )
            target_norm = normalize_task(turn.next_task)
            chosen = next(
                (t for t in pending if normalize_task(t.description) == target_norm),
                None,
            )
            if chosen is None:
                raise OrchestrationError(
                    f"next task {turn.next_task!r} is not pending",
                    raw_reply=reply,
                )

            ordinal = len(records) + 1
            audit.record(
                "task_start",
                ordinal=ordinal,
                description=chosen.description,
                category=chosen.category,
            )
            outcome = self._run_task(chosen, question, audit)
            if outcome.sql:
                audit.record("sql", text=outcome.sql)
            if outcome.pipeline_text:
                audit.record("pipeline", text=outcome.pipeline_text)
            if outcome.plan is not None:
                plan_obj = outcome.plan
                audit.record("plan", **plan_to_dict(outcome.plan))
            if outcome.failed:
                audit.record("task_failed", ordinal=ordinal, error=outcome.error)
            else:
                audit.record(
                    "observation", ordinal=ordinal, text=outcome.observation
                )
            records.append(
                TaskRecord(
                    ordinal=ordinal,
                    description=chosen.description,
                    category=chosen.category,
                    observation=outcome.observation,
                    sql=outcome.sql,
                    pipeline=outcome.pipeline_text,
                    status="failed" if outcome.failed else "done",
                    error=outcome.error,
                )
            )
            # A failed task leaves the pending list (it ran) but is not
            # marked done, so the planner may legitimately re-issue it.
            pending = [t for t in pending if t is not chosen]
            if outcome.failed:
                last_observation = f"Task failed: {outcome.error}"
            else:
                done_norms.add(normalize_task(chosen.description))
                last_observation = outcome.observation

        audit.record(
            "session_end", iterations=iterations, replanning_updates=replans
        )
        report = PlanReport(
            question=question,
            intent=intent.label,
            sop_id=sop_id,
            backend=self.backend.name,
            tasks=tuple(records),
            replanning_updates=replans,
            iterations=iterations,
            final_answer=final_answer,
            plan=plan_obj,
        )
        return report, audit

    # --- task execution ---------------------------------------------------

    def _run_task(self, task: Task, question: str,
                  audit: AuditLog) -> TaskOutcome:
        """Downstream failures (bad SQL, missing columns, thin history)
        become a failed task the planner can react to; backend transport
        and playback faults still abort the session."""
        try:
            return self._execute(task, question, audit)
        except (GatewayError, NonTerminationError):
            raise
        except ChainplanError as exc:
            return TaskOutcome(failed=True, error=str(exc))

    def _execute(self, task: Task, question: str, audit: AuditLog) -> TaskOutcome:
        if task.category == "plan_formulation":
            return self._formulate(question)
        if task.category == "historical_sales_analysis":
            return self._analyze(task, audit, question)
        return self._feature(task, question)

    def _analyze(self, task: Task, audit: AuditLog, question: str) -> TaskOutcome:
        if self.backend.name == "rulebased":
            plan = self._build_analysis_query(task, question)
            sql_text = render_sql(plan)
        else:
            prompt = render_template(
                TEMPLATES["task_execution"],
                {
                    "dataframe description": describe_catalog(self.catalog),
                    "Question": task.description,
                },
            )
            audit.record(
                "prompt", purpose="execution", digest=prompt_digest(prompt)
            )
            reply = self.backend.complete(prompt, "execution")
            audit.record("reply", purpose="execution", text=reply)
            sql_text = extract_sql(reply)
            try:
                plan = parse_query(sql_text)
            except ChainplanError as exc:
                raise OrchestrationError(
                    f"backend SQL rejected: {exc}", raw_reply=reply
                ) from None
            sql_text = render_sql(plan)
        try:
            result = execute_query(plan, self.env)
        except ChainplanError as exc:
            raise OrchestrationError(f"query failed: {exc}") from None

        pipeline_text = None
        if "year" in result.schema and "month" in result.schema:
            pipe = Pipeline(
                (
                    SortStep(
                        (SortKey("year"), SortKey("month")),
                        thought="chronological order for the series",
                    ),
                )
            )
            result, _ = run_pipeline(pipe, result)
            pipeline_text = render_pipeline(pipe)
        return TaskOutcome(
            observation=summarize_table(result),
            sql=sql_text,
            pipeline_text=pipeline_text,
        )

    def _build_analysis_query(self, task: Task, question: str) -> QueryPlan:
        scope = f"{task.description} {question}"
        table_name = self.config.primary_table
        if re.search(r"\bmarket\b|\bindustry\b", task.description, re.I):
            market = sorted(
                n for n in self.catalog.names() if n.startswith("market")
            )
            if market:
                table_name = market[0]
        table = self.catalog.get(table_name)
        schema = table.schema

        if not {"year", "month", "sales"} <= set(schema):
            return QueryPlan(
                projections=(
                    Projection(Aggregate("COUNT", "*"), alias="row_count"),
                ),
                source=table_name,
            )
        predicates = ()
        dept = self._detect_department(scope, table)
        if dept is not None:
            predicates = (Predicate("dept_id", "=", dept),)
        return QueryPlan(
            projections=(
                Projection(ColumnRef("year")),
                Projection(ColumnRef("month")),
                Projection(Aggregate("SUM", "sales"), alias="total_sales"),
            ),
            source=table_name,
            predicates=predicates,
            group_by=("year", "month"),
        )

    def _detect_department(self, text: str, table: Table) -> str | None:
        if "dept_id" not in table.schema or table.schema["dept_id"] != "string":
            return None
        low = text.lower()
        hits = sorted(
            {
                v
                for v in table.column_values("dept_id")
                if isinstance(v, str) and v and v.lower() in low
            },
            key=lambda v: (-len(v), v),
        )
        return hits[0] if hits else None

    def _feature(self, task: Task, question: str) -> TaskOutcome:
        table = self.catalog.get(self.config.primary_table)
        schema = table.schema
        if not {"month", "sales"} <= set(schema):
            return TaskOutcome(
                observation=(
                    f"Table {table.name} has no month/sales columns; "
                    f"no feature computed."
                )
            )
        steps: list[Step] = []
        dept = self._detect_department(f"{task.description} {question}", table)
        if dept is not None:
            steps.append(
                FilterStep(
                    Binary("==", Col("dept_id"), Lit(dept, "string")),
                    thought="scope to the named department",
                )
            )
        steps.append(
            GroupbyStep(
                keys=("month",),
                aggs=(AggSpec("sum", "sales", "total_sales"),),
                thought="monthly totals across years",
            )
        )
        steps.append(
            SortStep(
                (SortKey("total_sales", ascending=False), SortKey("month")),
                thought="rank months by volume",
            )
        )
        pipe = Pipeline(tuple(steps))
        result, _ = run_pipeline(pipe, table)
        if result.rows:
            peak_month, peak_total = result.rows[0][0], result.rows[0][1]
            observation = (
                f"Seasonality over {table.name}: peak month {peak_month} "
                f"with total sales {_fmt_number(peak_total)}; "
                f"{len(result.rows)} months ranked."
            )
        else:
            observation = f"Seasonality over {table.name}: no rows."
        return TaskOutcome(
            observation=observation, pipeline_text=render_pipeline(pipe)
        )

    def _formulate(self, question: str) -> TaskOutcome:
        table = self.catalog.get(self.config.primary_table)
        dept = self._detect_department(question, table)
        predicates = (
            (Predicate("dept_id", "=", dept),) if dept is not None else ()
        )
        series_query = QueryPlan(
            projections=(
                Projection(ColumnRef("year")),
                Projection(ColumnRef("month")),
                Projection(Aggregate("SUM", "sales"), alias="total_sales"),
            ),
            source=table.name,
            predicates=predicates,
            group_by=("year", "month"),
        )
        series = execute_query(series_query, self.env)
        pipe = Pipeline(
            (
                SortStep(
                    (SortKey("year"), SortKey("month")),
                    thought="chronological series",
                ),
            )
        )
        series, _ = run_pipeline(pipe, series)

        periods = [Period(int(r[0]), int(r[1])) for r in series.rows]
        values = [float(r[2]) if r[2] is not None else 0.0 for r in series.rows]
        m = self.config.season_length
        if len(periods) < m:
            raise OrchestrationError(
                f"need {m} monthly periods of history to plan, have "
                f"{len(periods)}"
            )
        tail_p = periods[-m:]
        tail_v = values[-m:]
        for a, b in zip(tail_p, tail_p[1:]):
            if b.index() != a.index() + 1:
                raise OrchestrationError(
                    f"history gap between {a} and {b}; the last {m} months "
                    f"must be contiguous"
                )

        target_period = periods[-1].plus(1)
        base_period = target_period.plus(-m)
        naive = self.toolbox.call(
            "seasonal_naive",
            {"values": tail_v, "season_length": m, "horizon": 1},
        ).value[0]
        uplift = self.config.promo_uplift_pct / 100.0
        target = naive * (1.0 + uplift)
        growth = self.toolbox.call(
            "plan_deviation", {"planned": naive, "actual": target}
        ).value

        k = self.config.plan_sub_periods
        per = target / k
        subs = [per] * (k - 1)
        subs.append(target - per * (k - 1))

        plan = Plan(
            period=str(target_period),
            target=target,
            unit=self.config.currency_unit,
            growth_pct=growth * 100.0,
            promo_budget_increase_pct=self.config.promo_budget_increase_pct,
            sub_targets=tuple(subs),
            basis=(
                f"seasonal repeat of {base_period} lifted by a "
                f"{format_pct(self.config.promo_uplift_pct)} promotion uplift"
            ),
            department=dept or "",
        )
        scope = f" for {dept}" if dept else ""
        observation = (
            f"Plan{scope} {plan.period}: target "
            f"{format_money(target, plan.unit)}, "
            f"{format_pct(plan.growth_pct)} growth over {base_period}, "
            f"promotion budget increase "
            f"{format_pct(plan.promo_budget_increase_pct)}."
        )
        return TaskOutcome(
            observation=observation,
            sql=render_sql(series_query),
            pipeline_text=render_pipeline(pipe),
            plan=plan,
        )
