"""Immutable in-memory columnar tables and CSV ingestion.

A Table is a named, schema-typed relation. Cell values are plain Python
values; dates are epoch-day integers (see dates.py) and the column type
tags disambiguate them from ints. Tables are frozen after construction,
so a catalog of tables is safe for concurrent readers.

CSV ingestion accepts an explicit schema or infers one. Inference tries,
per column over all non-empty cells: int, then float, then ISO-8601 date,
then bool ("true"/"false", case-insensitive), else string. Empty cells
are null under either mode.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .dates import format_iso_date, parse_iso_date
from .errors import CellTypeError, CsvParseError, ResolutionError

COLUMN_TYPES = ("int", "float", "string", "date", "bool")

Value = int | float | str | bool | None


@dataclass(frozen=True)
class Column:
    name: str
    type: str

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("column name must be non-empty")
        if self.type not in COLUMN_TYPES:
            raise ValueError(f"unknown column type: {self.type!r}")


def _cell_ok(value: Value, col_type: str) -> bool:
    if value is None:
        return True
    if col_type == "int" or col_type == "date":
        return isinstance(value, int) and not isinstance(value, bool)
    if col_type == "float":
        return isinstance(value, float)
    if col_type == "string":
        return isinstance(value, str)
    if col_type == "bool":
        return isinstance(value, bool)
    return False


@dataclass(frozen=True)
class Table:
    """An immutable relation: named, ordered typed columns, tuple rows."""

    name: str
    columns: tuple[Column, ...]
    rows: tuple[tuple[Value, ...], ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate column names in table {self.name!r}")
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(
                    f"row {i} arity {len(row)} != column count {width}"
                )
            for col, value in zip(self.columns, row):
                if not _cell_ok(value, col.type):
                    raise ValueError(
                        f"row {i}, column {col.name!r}: value {value!r} "
                        f"does not match type {col.type}"
                    )

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def schema(self) -> dict[str, str]:
        return {c.name: c.type for c in self.columns}

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise ResolutionError(f"unknown column {name!r} in table {self.name!r}")

    def column_type(self, name: str) -> str:
        return self.columns[self.column_index(name)].type

    def column_values(self, name: str) -> list[Value]:
        idx = self.column_index(name)
        return [row[idx] for row in self.rows]

    def render_cell(self, value: Value, col_type: str) -> str:
        if value is None:
            return ""
        if col_type == "date":
            return format_iso_date(value)
        if col_type == "bool":
            return "true" if value else "false"
        return str(value)

    def to_rows_of_dicts(self) -> list[dict[str, Value]]:
        names = self.column_names
        return [dict(zip(names, row)) for row in self.rows]


def _parse_cell(text: str, col_type: str) -> Value:
    """Parse one cell under an explicit type; raises ValueError on failure."""
    if col_type == "int":
        return int(text)
    if col_type == "float":
        return float(text)
    if col_type == "date":
        return parse_iso_date(text)
    if col_type == "bool":
        lowered = text.strip().lower()
        if lowered == "true":
            return True
        if lowered == "false":
            return False
        raise ValueError(f"not a bool: {text!r}")
    return text


def _try_type(text: str, col_type: str) -> bool:
    try:
        _parse_cell(text, col_type)
        return True
    except ValueError:
        return False


def _infer_column_type(cells: list[str]) -> str:
    """Column-level inference; all-null columns default to string."""
    non_empty = [c for c in cells if c != ""]
    if not non_empty:
        return "string"
    for candidate in ("int", "float", "date", "bool"):
        if all(_try_type(c, candidate) for c in non_empty):
            return candidate
    return "string"


def load_table(
    source: str | io.TextIOBase,
    name: str,
    schema: list[tuple[str, str]] | str = "infer",
) -> Table:
    """Load a comma-delimited UTF-8 stream with a header row into a Table.

    `schema` is either "infer" or an explicit list of (name, type) pairs
    matching the header order. Line numbers in errors are 1-based and
    count the header as line 1.
    """
    stream = io.StringIO(source) if isinstance(source, str) else source
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise CsvParseError("missing header row", line=1) from None
    header = [h.strip() for h in header]

    raw_rows: list[list[str]] = []
    for line_no, record in enumerate(reader, start=2):
        if len(record) != len(header):
            raise CsvParseError(
                f"row arity {len(record)} != column count {len(header)}",
                line=line_no,
            )
        raw_rows.append(record)

    if schema == "infer":
        col_types = [
            _infer_column_type([row[i] for row in raw_rows])
            for i in range(len(header))
        ]
        columns = tuple(Column(n, t) for n, t in zip(header, col_types))
    else:
        if [n for n, _ in schema] != header:
            raise CsvParseError(
                f"schema columns {[n for n, _ in schema]} do not match "
                f"header {header}",
                line=1,
            )
        columns = tuple(Column(n, t) for n, t in schema)

    rows: list[tuple[Value, ...]] = []
    for line_no, record in enumerate(raw_rows, start=2):
        values: list[Value] = []
        for col, cell in zip(columns, record):
            if cell == "":
                values.append(None)
                continue
            try:
                values.append(_parse_cell(cell, col.type))
            except ValueError:
                raise CellTypeError(
                    f"cannot parse {cell!r} as {col.type}",
                    line=line_no,
                    column=col.name,
                ) from None
        rows.append(tuple(values))
    return Table(name=name, columns=columns, rows=tuple(rows))


def load_csv_file(path: str | Path, name: str | None = None,
                  schema: list[tuple[str, str]] | str = "infer") -> Table:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        return load_table(fh, name=name or path.stem, schema=schema)


class Catalog:
    """Name -> Table mapping. Registration is create-only; lookups are
    safe to share across threads once loading is done."""

    def __init__(self) -> None:
        self._tables: dict[str, Table] = {}

    def register(self, table: Table) -> None:
        if table.name in self._tables:
            raise ResolutionError(f"table {table.name!r} already registered")
        self._tables[table.name] = table

    def get(self, name: str) -> Table:
        try:
            return self._tables[name]
        except KeyError:
            known = ", ".join(sorted(self._tables)) or "<empty catalog>"
            raise ResolutionError(
                f"unknown table {name!r}; catalog has: {known}"
            ) from None

    def __contains__(self, name: str) -> bool:
        return name in self._tables

    def names(self) -> list[str]:
        return sorted(self._tables)

    def tables(self) -> Iterable[Table]:
        return self._tables.values()


def load_manifest(path: str | Path) -> Catalog:
    """Load a catalog manifest: one `table_name=path` pair per line.

    Paths are resolved relative to the manifest's directory. Blank lines
    and lines starting with '#' are skipped.
    """
    path = Path(path)
    catalog = Catalog()
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CsvParseError(
                f"manifest entry must be table_name=path, got {line!r}",
                line=line_no,
            )
        name, rel = (part.strip() for part in line.split("=", 1))
        csv_path = path.parent / rel
        if not csv_path.exists():
            raise ResolutionError(
                f"manifest entry {name!r}: file not found: {csv_path}"
            )
        catalog.register(load_csv_file(csv_path, name=name))
    return catalog
