"""Exception hierarchy shared across the runtime.

Every error raised by the package derives from ChainplanError so callers
(the CLI in particular) can distinguish domain failures from bugs.
"""

from __future__ import annotations


class ChainplanError(Exception):
    """Base class for all domain errors."""

    kind = "error"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "message": str(self)}


# --- tabular store ---------------------------------------------------------

class TableError(ChainplanError):
    kind = "table"


class CsvParseError(TableError):
    kind = "csv-parse"

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class CellTypeError(TableError):
    kind = "cell-type"

    def __init__(self, message: str, line: int, column: str):
        super().__init__(f"line {line}, column {column!r}: {message}")
        self.line = line
        self.column = column


class SqlSyntaxError(ChainplanError):
    kind = "sql-syntax"

    def __init__(self, message: str, position: int = 0):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnsupportedConstructError(SqlSyntaxError):
    kind = "sql-unsupported"

    def __init__(self, token: str, position: int):
        super().__init__(f"unsupported construct: {token!r}", position)
        self.token = token


class ResolutionError(ChainplanError):
    """Unknown table or column."""

    kind = "resolution"


class QueryTypeError(ChainplanError):
    """Ill-typed query, e.g. SUM over a string column."""

    kind = "query-type"


# --- expressions and pipelines ---------------------------------------------

class ExprSyntaxError(ChainplanError):
    kind = "expr-syntax"

    def __init__(self, message: str, position: int = 0):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class ExprTypeError(ChainplanError):
    kind = "expr-type"


class ExprRuntimeError(ChainplanError):
    kind = "expr-runtime"

    def __init__(self, message: str, row_index: int):
        super().__init__(f"row {row_index}: {message}")
        self.row_index = row_index


class StepParseError(ChainplanError):
    kind = "step-parse"


class UnknownKindError(StepParseError):
    kind = "step-unknown-kind"


class NotAtomicError(StepParseError):
    kind = "step-not-atomic"


class PipelineValidationError(ChainplanError):
    kind = "pipeline-validation"


class PipelineRuntimeError(ChainplanError):
    kind = "pipeline-runtime"

    def __init__(self, message: str, step_index: int, row_index: int | None = None):
        at = f"step {step_index}"
        if row_index is not None:
            at += f", row {row_index}"
        super().__init__(f"{at}: {message}")
        self.step_index = step_index
        self.row_index = row_index


class TranslationError(ChainplanError):
    """Query plan has no mechanical pipeline equivalent."""

    kind = "translation"


# --- llm gateway ------------------------------------------------------------

class GatewayError(ChainplanError):
    kind = "gateway"


class RenderError(GatewayError):
    kind = "render"

    def __init__(self, placeholder: str):
        super().__init__(f"unresolved placeholder: {placeholder}")
        self.placeholder = placeholder


class TranscriptError(GatewayError):
    kind = "transcript"


class AmbiguousTurnError(TranscriptError):
    kind = "transcript-ambiguous"


class PlaybackExhaustedError(GatewayError):
    kind = "playback-exhausted"


class PlaybackMismatchError(GatewayError):
    kind = "playback-mismatch"

    def __init__(self, expected: str, actual: str):
        super().__init__(f"prompt digest mismatch: expected {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class TransportError(GatewayError):
    kind = "transport"

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class BackendError(GatewayError):
    kind = "backend"


# --- knowledge store --------------------------------------------------------

class KnowledgeError(ChainplanError):
    kind = "knowledge"


class DuplicateDocumentError(KnowledgeError):
    kind = "duplicate-document"


class EmptyQueryError(KnowledgeError):
    kind = "empty-query"


# --- toolbox ----------------------------------------------------------------

class ToolboxError(ChainplanError):
    kind = "toolbox"


class UnknownToolError(ToolboxError):
    kind = "unknown-tool"

    def __init__(self, name: str, registered: list[str]):
        super().__init__(
            f"unknown tool {name!r}; registered: {', '.join(registered)}"
        )
        self.registered = registered


class ToolArgumentError(ToolboxError):
    kind = "tool-argument"

    def __init__(self, message: str, param: str):
        super().__init__(message)
        self.param = param


class HistoryError(ToolboxError):
    kind = "history"


# --- agents -----------------------------------------------------------------

class AgentError(ChainplanError):
    kind = "agent"


class ClassificationError(AgentError):
    kind = "classification"


class OrchestrationError(AgentError):
    kind = "orchestration"

    def __init__(self, message: str, raw_reply: str | None = None):
        super().__init__(message)
        self.raw_reply = raw_reply


class NonTerminationError(AgentError):
    kind = "non-termination"


class CorrectionError(AgentError):
    kind = "correction"


class InfeasibleRevisionError(CorrectionError):
    kind = "infeasible-revision"


# --- scenario / config ------------------------------------------------------

class ScenarioError(ChainplanError):
    kind = "scenario"


class ConfigError(ChainplanError):
    kind = "config"

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
