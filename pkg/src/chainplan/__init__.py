"""Deterministic supply chain planning agent.

A planning session classifies the question, retrieves the best-matching
procedure document, then loops: the backend proposes or updates a task
list, the orchestrator executes the named next task against an in-memory
SQL subset and an atomic-step analysis pipeline, and the resulting
observation feeds the next round until the backend issues a final
answer. Plans are derived from seasonal history via a small toolbox of
closed-form forecasting and inventory functions, monitored for
deviation against actuals, and every session leaves a replayable audit
log. A synthetic scenario generator scores the whole loop end to end.
"""

from .config import SessionConfig, load_session_config
from .correction import (
    Attribution,
    DeviationReport,
    RevisedPlan,
    attribute_cause,
    detect_deviation,
    revise_plan,
)
from .agents import (
    IntentResult,
    Orchestrator,
    categorize_task,
    classify_intent,
)
from .errors import ChainplanError
from .expr import compile_expr, eval_expr, infer_type, parse_expr, render_expr
from .gateway import (
    Backend,
    HttpBackend,
    RulebasedBackend,
    ScriptedBackend,
    Turn,
    parse_turn,
    prompt_digest,
    render_turn,
)
from .knowledge import Document, KnowledgeStore, load_documents, parse_document
from .pipeline import (
    Pipeline,
    compile_pipeline,
    parse_pipeline,
    render_pipeline,
    run_pipeline,
    translate_query,
    validate_pipeline,
)
from .report import (
    AuditLog,
    Plan,
    PlanReport,
    fold_events,
    load_events_jsonl,
    load_events_prefix,
    render_report,
)
from .scenario import (
    EvalMetrics,
    ScenarioConfig,
    SimulationResult,
    World,
    evaluate,
    generate_history,
    load_scenario_config,
    render_metrics_table,
    run_eval,
    simulate_execution,
)
from .sql import QueryEnv, QueryPlan, execute_query, parse_query, render_sql
from .table import Catalog, Column, Table, load_csv_file, load_manifest, load_table
from .toolbox import (
    Toolbox,
    forecast,
    in_stock_rate,
    moving_average,
    order_up_to,
    plan_deviation,
    seasonal_naive,
    standard_toolbox,
)

__version__ = "0.1.0"

__all__ = [
    "Attribution",
    "AuditLog",
    "Backend",
    "Catalog",
    "ChainplanError",
    "Column",
    "DeviationReport",
    "Document",
    "EvalMetrics",
    "HttpBackend",
    "IntentResult",
    "KnowledgeStore",
    "Orchestrator",
    "Pipeline",
    "Plan",
    "PlanReport",
    "QueryEnv",
    "QueryPlan",
    "RevisedPlan",
    "RulebasedBackend",
    "ScenarioConfig",
    "ScriptedBackend",
    "SessionConfig",
    "SimulationResult",
    "Table",
    "Toolbox",
    "Turn",
    "World",
    "attribute_cause",
    "categorize_task",
    "classify_intent",
    "compile_expr",
    "compile_pipeline",
    "detect_deviation",
    "eval_expr",
    "evaluate",
    "execute_query",
    "fold_events",
    "forecast",
    "generate_history",
    "in_stock_rate",
    "infer_type",
    "load_csv_file",
    "load_documents",
    "load_events_jsonl",
    "load_events_prefix",
    "load_manifest",
    "load_scenario_config",
    "load_session_config",
    "load_table",
    "moving_average",
    "order_up_to",
    "parse_document",
    "parse_expr",
    "parse_pipeline",
    "parse_query",
    "parse_turn",
    "plan_deviation",
    "prompt_digest",
    "render_expr",
    "render_metrics_table",
    "render_pipeline",
    "render_report",
    "render_sql",
    "render_turn",
    "revise_plan",
    "run_eval",
    "run_pipeline",
    "seasonal_naive",
    "simulate_execution",
    "standard_toolbox",
    "translate_query",
    "validate_pipeline",
    "__version__",
]
