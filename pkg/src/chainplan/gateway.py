"""Model gateway: prompt templates, the turn grammar, and backends.

Templates are plain text with `{Variable Name}` placeholders; rendering
is exact substitution, and every placeholder must be supplied.

Planner replies and transcript blocks share one label-anchored grammar.
Labels sit at the start of a line:

    Question: ...
    Original task list:      (numbered items on following lines)
    Updated Task List:       (numbered items on following lines)
    Next task: ...
    Observation: ...
    Final Answer: ...

Content runs verbatim until the next label. A turn carrying both a
next task and a final answer, or both list kinds, is ambiguous and
rejected. parse_turn(render_turn(t)) == t for canonical turns.

Backends implement complete(prompt, purpose) -> str:

    ScriptedBackend   fixed JSONL playback, ordinal order, with an
                      optional per-entry sha256 digest check of the
                      normalized prompt
    RulebasedBackend  deterministic planner driven by the rendered
                      planning prompt's own sections
    HttpBackend       chat-completion endpoint, temperature 0

Purposes: intent, planning, execution, correction.
"""

from __future__ import annotations

import hashlib
import json
import re
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    AmbiguousTurnError,
    BackendError,
    PlaybackExhaustedError,
    PlaybackMismatchError,
    RenderError,
    TranscriptError,
    TransportError,
)

# --- templates ----------------------------------------------------------------

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z][A-Za-z0-9 _]*)\}")

TEMPLATES: dict[str, str] = {
    "intent": (
        "Classify the question into exactly one intent label:\n"
        "- plan_formulation\n"
        "- instock_monitoring\n"
        "- turnover_diagnostics\n"
        "- replenishment_recommendation\n"
        "\n"
        "Question: {Question}\n"
        "\n"
        "Reply with the label only.\n"
    ),
    "task_planning": (
        "You are a supply chain planning assistant. Break the question\n"
        "into a short ordered task list, then keep the list current as\n"
        "observations arrive.\n"
        "\n"
        "Standard operating procedure:\n"
        "{SOP RAG}\n"
        "\n"
        "Pending tasks:\n"
        "{Task list}\n"
        "\n"
        "Latest observation:\n"
        "{Observation}\n"
        "\n"
        "Question: {Question}\n"
        "\n"
        "Reply with either a task list block (\"Original task list:\" on\n"
        "the first call, \"Updated Task List:\" afterwards) of numbered\n"
        "tasks followed by \"Next task:\" naming the one task to run\n"
        "now, or \"Final Answer:\" once nothing is pending.\n"
    ),
    "task_execution": (
        "You are a data analyst. Write one query in the supported SQL\n"
        "subset (SELECT, FROM, WHERE with AND, GROUP BY, ORDER BY,\n"
        "LIMIT; aggregates SUM, AVG, COUNT, MIN, MAX; sysdate(k) for\n"
        "dates relative to today) that gathers the data for the task.\n"
        "\n"
        "Available tables:\n"
        "{dataframe description}\n"
        "\n"
        "Task: {Question}\n"
        "\n"
        "Reply with the SQL only.\n"
    ),
    "correction": (
        "A running plan has drifted from actuals. Using the deviation\n"
        "summary, name the most likely cause factor and pick a revision\n"
        "policy.\n"
        "\n"
        "Deviation summary:\n"
        "{Observation}\n"
        "\n"
        "Question: {Question}\n"
        "\n"
        "Reply with one line: cause=<factor>; policy=<reforecast|hold_target>.\n"
    ),
}


def render_template(template: str, variables: dict[str, str]) -> str:
    """Substitute every {placeholder}; unknown placeholders are an error."""

    def sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in variables:
            raise RenderError(name)
        return variables[name]

    return _PLACEHOLDER_RE.sub(sub, template)


def prompt_digest(text: str) -> str:
    """sha256 of the normalized prompt: CRLF folded to LF, trailing
    whitespace stripped per line, outer whitespace stripped."""
    unified = text.replace("\r\n", "\n").replace("\r", "\n")
    lines = [line.rstrip() for line in unified.split("\n")]
    normalized = "\n".join(lines).strip()
    return hashlib.sha256(normalized.encode("utf-8")).hexdigest()


# --- turn grammar ---------------------------------------------------------------

@dataclass(frozen=True)
class Turn:
    question: str | None = None
    original_tasks: tuple[str, ...] | None = None
    updated_tasks: tuple[str, ...] | None = None
    next_task: str | None = None
    observation: str | None = None
    final_answer: str | None = None


_LABELS = (
    ("question", re.compile(r"^question\s*:\s?(.*)$", re.IGNORECASE)),
    ("original", re.compile(r"^original task list\s*:?\s*(.*)$", re.IGNORECASE)),
    ("updated", re.compile(r"^updated task list\s*:?\s*(.*)$", re.IGNORECASE)),
    ("next", re.compile(r"^next task\s*:\s?(.*)$", re.IGNORECASE)),
    ("observation", re.compile(r"^observation\s*:\s?(.*)$", re.IGNORECASE)),
    ("final", re.compile(r"^final answer\s*:\s?(.*)$", re.IGNORECASE)),
)

_ITEM_RE = re.compile(r"^(?:\d+[.)]|[-*])\s+(.*)$")


def _match_label(line: str) -> tuple[str, str] | None:
    for name, pattern in _LABELS:
        m = pattern.match(line.strip())
        if m:
            return name, m.group(1).strip()
    return None


def _check_turn(turn: Turn) -> Turn:
    if turn.next_task is not None and turn.final_answer is not None:
        raise AmbiguousTurnError(
            "turn carries both a next task and a final answer"
        )
    if turn.original_tasks is not None and turn.updated_tasks is not None:
        raise AmbiguousTurnError("turn carries both task list kinds")
    for tasks in (turn.original_tasks, turn.updated_tasks):
        if tasks is not None and not tasks:
            raise TranscriptError("task list has no items")
    fields = (
        turn.question,
        turn.original_tasks,
        turn.updated_tasks,
        turn.next_task,
        turn.observation,
        turn.final_answer,
    )
    if all(f is None for f in fields):
        raise TranscriptError("turn has no labeled content")
    for name, value in (
        ("Question", turn.question),
        ("Next task", turn.next_task),
        ("Observation", turn.observation),
        ("Final Answer", turn.final_answer),
    ):
        if value is not None and not value.strip():
            raise TranscriptError(f"{name} content is empty")
    return turn


def parse_turn(text: str) -> Turn:
    """Parse one labeled block. Raises TranscriptError (or the
    AmbiguousTurnError subclass) on malformed input; never anything else."""
    if not isinstance(text, str):
        raise TranscriptError("turn must be text")
    seen: dict[str, object] = {}
    current: str | None = None           # label collecting content lines
    content: list[str] = []
    items: list[str] = []

    def close() -> None:
        nonlocal current, content, items
        if current is None:
            return
        if current in ("original", "updated"):
            if not items:
                raise TranscriptError(f"{current} task list has no items")
            seen[current] = tuple(items)
        else:
            seen[current] = "\n".join(content).strip()
        current = None
        content = []
        items = []

    for raw in text.splitlines():
        line = raw.rstrip()
        hit = _match_label(line)
        if hit:
            name, inline = hit
            if name in seen or name == current:
                raise TranscriptError(f"duplicate label: {name}")
            close()
            if name in ("original", "updated"):
                if inline:
                    raise TranscriptError(
                        "task list items must be on their own lines"
                    )
                current = name
            else:
                current = name
                if inline:
                    content.append(inline)
            continue
        if current in ("original", "updated"):
            if not line.strip():
                continue
            m = _ITEM_RE.match(line.strip())
            if m:
                items.append(m.group(1).strip())
            elif items:
                items[-1] = items[-1] + "\n" + line.strip()
            else:
                raise TranscriptError(f"expected a task item, got {line!r}")
        elif current is not None:
            content.append(line)
        elif line.strip():
            snippet = line.strip()[:80]
            raise TranscriptError(f"text before any label: {snippet!r}")
    close()

    return _check_turn(
        Turn(
            question=seen.get("question"),
            original_tasks=seen.get("original"),
            updated_tasks=seen.get("updated"),
            next_task=seen.get("next"),
            observation=seen.get("observation"),
            final_answer=seen.get("final"),
        )
    )


def render_turn(turn: Turn) -> str:
    """Canonical text for a turn; inverse of parse_turn."""
    _check_turn(turn)
    parts: list[str] = []
    if turn.question is not None:
        parts.append(f"Question: {turn.question}")
    for label, tasks in (
        ("Original task list:", turn.original_tasks),
        ("Updated Task List:", turn.updated_tasks),
    ):
        if tasks is not None:
            lines = [label]
            lines.extend(f"{i}. {t}" for i, t in enumerate(tasks, start=1))
            parts.append("\n".join(lines))
    if turn.next_task is not None:
        parts.append(f"Next task: {turn.next_task}")
    if turn.observation is not None:
        parts.append(f"Observation: {turn.observation}")
    if turn.final_answer is not None:
        parts.append(f"Final Answer: {turn.final_answer}")
    return "\n".join(parts)


# --- backends ---------------------------------------------------------------------

class Backend:
    """Interface: complete(prompt, purpose) -> reply text."""

    name = "backend"

    def complete(self, prompt: str, purpose: str) -> str:
        raise NotImplementedError


@dataclass
class _PlaybackEntry:
    reply: str
    digest: str | None = None


class ScriptedBackend(Backend):
    """Replays recorded replies in order. Entries are {match, response}
    records: response is the reply text, and a non-null match pins the
    sha256 digest of the prompt the entry answers, turning a drifted
    prompt into a hard error instead of a silent wrong reply."""

    name = "scripted"

    def __init__(self, entries: list[dict]):
        self.entries: list[_PlaybackEntry] = []
        for i, raw in enumerate(entries):
            if "response" not in raw:
                raise BackendError(f"playback entry {i} has no response")
            self.entries.append(
                _PlaybackEntry(reply=raw["response"], digest=raw.get("match"))
            )
        self.cursor = 0

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ScriptedBackend":
        entries = []
        text = Path(path).read_text(encoding="utf-8")
        for i, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise BackendError(f"{path}:{i}: bad JSON: {exc}") from None
        return cls(entries)

    def complete(self, prompt: str, purpose: str) -> str:
        if self.cursor >= len(self.entries):
            raise PlaybackExhaustedError(
                f"playback exhausted after {len(self.entries)} replies "
                f"(purpose: {purpose})"
            )
        entry = self.entries[self.cursor]
        if entry.digest is not None:
            actual = prompt_digest(prompt)
            if actual != entry.digest:
                raise PlaybackMismatchError(expected=entry.digest, actual=actual)
        self.cursor += 1
        return entry.reply


_SECTION_LABELS = (
    "Standard operating procedure:",
    "Pending tasks:",
    "Latest observation:",
    "Question:",
)


def _prompt_sections(prompt: str) -> dict[str, str]:
    """Split the built-in planning prompt back into its sections."""
    sections: dict[str, str] = {}
    current: str | None = None
    buf: list[str] = []

    def close() -> None:
        nonlocal current, buf
        if current is not None:
            sections[current] = "\n".join(buf).strip()
        current = None
        buf = []

    for line in prompt.splitlines():
        stripped = line.strip()
        hit = None
        inline = ""
        for label in _SECTION_LABELS:
            if stripped.startswith(label):
                hit = label
                inline = stripped[len(label):].strip()
                break
        if hit:
            close()
            current = hit
            if inline:
                buf.append(inline)
        elif current is not None:
            buf.append(line)
    close()
    return sections


_GENERIC_TASKS = (
    "Analyze historical sales for the question's scope",
    "Analyze market and industry conditions",
    "Formulate the plan from the gathered evidence",
)


class RulebasedBackend(Backend):
    """Plans without a model. It reads the sections the built-in
    planning template renders, so it is coupled to that template:

      - empty pending list, empty observation: emit the procedure's
        numbered steps as the original task list (or a generic
        three-task list when no procedure text is present)
      - pending tasks present: echo them as the updated list and pick
        the first as next
      - nothing pending after work has happened: final answer built
        from the last observation

    Execution and correction prompts are refused; the orchestrator
    answers those itself when running rulebased.
    """

    name = "rulebased"

    def complete(self, prompt: str, purpose: str) -> str:
        if purpose != "planning":
            raise BackendError(
                f"rulebased backend only plans; got purpose {purpose!r}"
            )
        sections = _prompt_sections(prompt)
        pending = self._items(sections.get("Pending tasks:", ""))
        observation = sections.get("Latest observation:", "")

        if pending:
            lines = ["Updated Task List:"]
            lines.extend(f"{i}. {t}" for i, t in enumerate(pending, start=1))
            lines.append(f"Next task: {pending[0]}")
            return "\n".join(lines)

        if observation:
            summary = observation.splitlines()[-1].strip()
            return f"Final Answer: {summary}"

        sop_steps = self._items(
            sections.get("Standard operating procedure:", "")
        )
        tasks = tuple(sop_steps) if sop_steps else _GENERIC_TASKS
        lines = ["Original task list:"]
        lines.extend(f"{i}. {t}" for i, t in enumerate(tasks, start=1))
        lines.append(f"Next task: {tasks[0]}")
        return "\n".join(lines)

    @staticmethod
    def _items(block: str) -> list[str]:
        items = []
        for line in block.splitlines():
            m = _ITEM_RE.match(line.strip())
            if m:
                items.append(m.group(1).strip())
        return items


class HttpBackend(Backend):
    """POSTs to an OpenAI-style chat completion endpoint at temperature 0."""

    name = "http"

    def __init__(self, base_url: str, model: str, api_key: str | None = None,
                 timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout

    def complete(self, prompt: str, purpose: str) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        request = urllib.request.Request(
            f"{self.base_url}/chat/completions",
            data=json.dumps(payload).encode("utf-8"),
            headers=headers,
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                body = resp.read().decode("utf-8")
        except urllib.error.HTTPError as exc:
            raise TransportError(
                f"chat completion failed: HTTP {exc.code}", status=exc.code
            ) from None
        except urllib.error.URLError as exc:
            raise TransportError(f"chat completion failed: {exc.reason}") from None
        try:
            parsed = json.loads(body)
            return parsed["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError):
            raise TransportError("malformed chat completion response") from None
