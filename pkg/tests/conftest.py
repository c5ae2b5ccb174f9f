from __future__ import annotations

import contextlib
import io
import os
import sys
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parent.parent
CASE_DIR = REPO / "fixtures" / "case_study"
SCENARIO_DIR = REPO / "fixtures" / "scenarios"

CASE_QUESTION = "Generate the November sales plan for the computer Department."


@pytest.fixture
def repo_root() -> Path:
    return REPO


@pytest.fixture
def case_dir() -> Path:
    return CASE_DIR


@pytest.fixture
def scenario_dir() -> Path:
    return SCENARIO_DIR


@pytest.fixture
def run_cli(monkeypatch):
    """In-process CLI runner; returns (exit_code, stdout, stderr).

    Runs from the repository root because the worked-example config uses
    repo-relative paths. The config env var is cleared unless the test
    sets one explicitly.
    """

    def run(argv, stdin_text=None, env=None):
        from chainplan.cli import main

        monkeypatch.delenv("CHAINPLAN_CONFIG", raising=False)
        for key, value in (env or {}).items():
            monkeypatch.setenv(key, value)
        if stdin_text is not None:
            monkeypatch.setattr(sys, "stdin", io.StringIO(stdin_text))
        out, err = io.StringIO(), io.StringIO()
        prev = os.getcwd()
        os.chdir(REPO)
        try:
            with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
                code = main(list(argv))
        finally:
            os.chdir(prev)
        return code, out.getvalue(), err.getvalue()

    return run


def make_table(name, cols, rows):
    """Build a Table from (name, type) pairs and row tuples."""
    from chainplan.table import Column, Table

    return Table(
        name=name,
        columns=tuple(Column(n, t) for n, t in cols),
        rows=tuple(tuple(r) for r in rows),
    )


@pytest.fixture
def sales_fixture():
    """Four-row sales table: two Computer rows in 2023-11, two others."""
    return make_table(
        "sales",
        [
            ("year", "int"),
            ("month", "int"),
            ("dept_id", "string"),
            ("sales", "int"),
            ("pv", "int"),
            ("user_cnt", "int"),
            ("order_date", "date"),
        ],
        [
            (2023, 11, "Computer", 60, 600, 30, 19676),
            (2023, 11, "Computer", 40, 400, 20, 19677),
            (2023, 11, "Grocery", 25, 250, 10, 19676),
            (2023, 10, "Computer", 55, 500, 28, 19645),
        ],
    )
