"""Command line entry points.

Subcommands:
  plan    run one planning session and print its report
  repl    run a session per line read from stdin
  eval    score the agent against a synthetic scenario
  replay  rebuild a session report from its audit log

Configuration merges three layers, later layers winning: built-in
defaults, the config file (--config flag, else the CHAINPLAN_CONFIG
environment variable), then command line flags. Reports go to stdout;
errors are one-line JSON objects on stderr. Exit codes: 0 success,
1 session failure, 2 configuration or usage failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .agents import Orchestrator
from .config import ENV_CONFIG, SessionConfig, load_session_config
from .errors import ChainplanError, ConfigError
from .gateway import Backend, HttpBackend, RulebasedBackend, ScriptedBackend
from .knowledge import load_documents
from .report import (
    AuditLog,
    fold_events,
    load_events_prefix,
    render_report,
    report_to_dict,
)
from .scenario import (
    load_scenario_config,
    metrics_to_dict,
    render_metrics_table,
    run_eval,
)
from .table import load_manifest


def _print_error(exc: ChainplanError) -> None:
    payload = {"error": exc.kind, "message": str(exc)}
    audit_path = getattr(exc, "audit_path", None)
    if audit_path:
        payload["audit"] = audit_path
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def build_backend(cfg: SessionConfig) -> Backend:
    if cfg.backend == "rulebased":
        return RulebasedBackend()
    if cfg.backend == "scripted":
        return ScriptedBackend.from_jsonl(cfg.playback_path)
    return HttpBackend(
        base_url=cfg.http_base_url,
        model=cfg.http_model,
        api_key=cfg.http_api_key,
    )


# plan/repl flag -> config key; every flag defaults to None (not set).
_FLAG_KEYS = (
    ("backend", "backend"),
    ("manifest", "manifest_path"),
    ("sop_dir", "sop_dir"),
    ("playback", "playback_path"),
    ("reference_date", "reference_date"),
    ("primary_table", "primary_table"),
    ("audit", "audit_path"),
)


def merge_config(args: argparse.Namespace) -> SessionConfig:
    cfg = SessionConfig()
    path = args.config or os.environ.get(ENV_CONFIG)
    if path:
        cfg = load_session_config(path, base=cfg)
    overrides = {}
    for attr, key in _FLAG_KEYS:
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    if overrides:
        cfg = SessionConfig.from_mapping(overrides, base=cfg)
    return cfg


def _build_orchestrator(cfg: SessionConfig) -> Orchestrator:
    if not cfg.manifest_path:
        raise ConfigError(
            "a table manifest is required; set manifest_path or --manifest",
            field="manifest_path",
        )
    catalog = load_manifest(cfg.manifest_path)
    store = load_documents(cfg.sop_dir) if cfg.sop_dir else None
    return Orchestrator(cfg, catalog, build_backend(cfg), store=store)


def _echo_progress(audit: AuditLog, out) -> None:
    """Interactive preamble: the classified intent, then the task list
    as it evolved across replans."""
    for event in audit.events:
        kind = event.get("event")
        if kind == "intent":
            print(f"Intent: {event.get('label', '')}", file=out)
        elif kind in ("task_list", "replan"):
            header = "Task list:" if kind == "task_list" else "Updated task list:"
            print(header, file=out)
            tasks = event.get("tasks", [])
            if not tasks:
                print("  (none)", file=out)
            for i, text in enumerate(tasks, start=1):
                print(f"  {i}. {text}", file=out)
    print(file=out)


def _run_one(cfg: SessionConfig, orchestrator: Orchestrator, question: str,
             as_json: bool, out, echo: bool = False) -> None:
    try:
        report, audit = orchestrator.run_session(question)
    except ChainplanError as exc:
        events = getattr(exc, "events", None)
        if cfg.audit_path and events:
            partial = AuditLog()
            partial.events.extend(events)
            partial.write_jsonl(cfg.audit_path)
            exc.audit_path = cfg.audit_path
        raise
    if cfg.audit_path:
        audit.write_jsonl(cfg.audit_path)
    if as_json:
        print(json.dumps(report_to_dict(report), sort_keys=True), file=out)
        return
    if echo:
        _echo_progress(audit, out)
    print(render_report(report), end="", file=out)


def cmd_plan(args: argparse.Namespace) -> int:
    cfg = merge_config(args)
    orchestrator = _build_orchestrator(cfg)
    _run_one(cfg, orchestrator, args.question, args.json, sys.stdout)
    return 0


def cmd_repl(args: argparse.Namespace) -> int:
    cfg = merge_config(args)
    orchestrator = _build_orchestrator(cfg)
    for raw in sys.stdin:
        question = raw.strip()
        if not question:
            continue
        if question in (":quit", "exit", "quit"):
            break
        try:
            _run_one(cfg, orchestrator, question, args.json, sys.stdout,
                     echo=True)
        except ChainplanError as exc:
            _print_error(exc)
        sys.stdout.flush()
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_scenario_config(args.scenario)
    metrics = run_eval(cfg)
    if args.json:
        print(json.dumps(metrics_to_dict(metrics), sort_keys=True, indent=2))
    else:
        print(render_metrics_table(metrics), end="")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    events, warning = load_events_prefix(args.audit)
    if warning is None and events and events[-1].get("event") != "session_end":
        warning = f"{args.audit}: audit log ends mid-session"
    if warning:
        print(
            json.dumps({"error": "audit", "message": warning}, sort_keys=True),
            file=sys.stderr,
        )
    if not events:
        print("no events")
        return 0
    report = fold_events(events)
    if args.json:
        print(json.dumps(report_to_dict(report), sort_keys=True))
    else:
        print(render_report(report), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainplan",
        description="Deterministic supply chain planning agent.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_session_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--backend", choices=("rulebased", "scripted", "http"))
        p.add_argument("--manifest", help="table manifest file")
        p.add_argument("--sop-dir", dest="sop_dir",
                       help="directory of procedure documents")
        p.add_argument("--playback", help="scripted backend reply file")
        p.add_argument("--reference-date", dest="reference_date",
                       help="ISO date that sysdate(0) resolves to")
        p.add_argument("--primary-table", dest="primary_table",
                       help="table that planning sessions read")
        p.add_argument("--audit", help="write the audit log here")
        p.add_argument("--json", action="store_true",
                       help="print the report as JSON")

    p_plan = sub.add_parser("plan", help="run one planning session")
    add_session_flags(p_plan)
    p_plan.add_argument("question")
    p_plan.set_defaults(func=cmd_plan)

    p_repl = sub.add_parser("repl", help="one session per stdin line")
    add_session_flags(p_repl)
    p_repl.set_defaults(func=cmd_repl)

    p_eval = sub.add_parser("eval", help="score against a synthetic scenario")
    p_eval.add_argument("--scenario", required=True,
                        help="scenario config file")
    p_eval.add_argument("--json", action="store_true",
                        help="print metrics as JSON instead of a table")
    p_eval.set_defaults(func=cmd_eval)

    p_replay = sub.add_parser("replay", help="rebuild a report from an audit log")
    p_replay.add_argument("--audit", required=True, help="audit JSONL file")
    p_replay.add_argument("--json", action="store_true",
                          help="print the report as JSON")
    p_replay.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _print_error(exc)
        return 2
    except ChainplanError as exc:
        _print_error(exc)
        return 1
    except OSError as exc:
        print(
            json.dumps({"error": "os", "message": str(exc)}, sort_keys=True),
            file=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
