"""Sandboxed SQLite execution, result normalization, and equivalence.

Queries run against a read-only connection with a deny-by-default authorizer,
so predicted SQL can never mutate the database file. Results are normalized
(floats rounded to 4 decimals) and compared as multisets of rows: row order
is irrelevant, column order matters, NULL is distinct from 0 and ''. A failed
execution is never equivalent to anything, including another failure.
"""

from __future__ import annotations

import re
import sqlite3
import threading
import time
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

FLOAT_DECIMALS = 4

DEFAULT_TIMEOUT_MS = 30000

# progress-handler granularity in VM instructions; small enough that the
# wall-clock deadline lands within a few ms
_PROGRESS_EVERY = 1000

_ALLOWED_ACTIONS = {
    code
    for name in ("SQLITE_SELECT", "SQLITE_READ", "SQLITE_FUNCTION", "SQLITE_RECURSIVE")
    if (code := getattr(sqlite3, name, None)) is not None
}


class GroundTruthUnexecutableError(RuntimeError):
    """The gold query itself fails to execute; scoring cannot proceed."""


class Outcome(str, Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    ABSTAINED = "abstained"


@dataclass(frozen=True)
class ExecutionOutcome:
    # one of: ok, sql_error, timeout
    status: str
    rows: tuple[tuple, ...] | None
    error_text: str | None
    elapsed_ms: float


def normalize_value(value: object) -> object:
    if isinstance(value, float):
        return round(value, FLOAT_DECIMALS)
    return value


def normalize_rows(rows) -> tuple[tuple, ...]:
    return tuple(tuple(normalize_value(v) for v in row) for row in rows)


def _authorizer(action, *args):
    return sqlite3.SQLITE_OK if action in _ALLOWED_ACTIONS else sqlite3.SQLITE_DENY


def substitute_time_anchor(sql: str, literal: str) -> str:
    """Replace the current_time token with a fixed literal so that queries
    anchored to 'now' stay reproducible."""
    return re.sub(r"\bcurrent_time\b", literal, sql, flags=re.IGNORECASE)


def execute(sql: str, db_path: str | Path, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> ExecutionOutcome:
    """Run one statement read-only with a wall-clock timeout. Never raises:
    every failure mode comes back as a sql_error or timeout outcome."""
    start = time.perf_counter()
    timed_out = False

    def elapsed_ms() -> float:
        return (time.perf_counter() - start) * 1000.0

    try:
        conn = sqlite3.connect(f"file:{Path(db_path)}?mode=ro", uri=True)
    except sqlite3.Error as exc:
        return ExecutionOutcome("sql_error", None, str(exc), elapsed_ms())
    try:
        conn.set_authorizer(_authorizer)
        deadline = start + timeout_ms / 1000.0

        def _on_progress():
            nonlocal timed_out
            if time.perf_counter() > deadline:
                timed_out = True
                return 1
            return 0

        conn.set_progress_handler(_on_progress, _PROGRESS_EVERY)
        try:
            cursor = conn.execute(sql)
            rows = cursor.fetchall()
        except sqlite3.Error as exc:
            status = "timeout" if timed_out else "sql_error"
            return ExecutionOutcome(status, None, str(exc), elapsed_ms())
        return ExecutionOutcome("ok", normalize_rows(rows), None, elapsed_ms())
    finally:
        conn.close()


def equivalent(a: ExecutionOutcome, b: ExecutionOutcome) -> bool:
    """Multiset row equality between two successful executions."""
    if a.status != "ok" or b.status != "ok":
        return False
    return Counter(a.rows) == Counter(b.rows)


class ExecutionCache:
    """Memoizes executions per run; shared across worker threads.

    Execution is pure (read-only connection), so caching by (db, sql) is
    sound and saves re-running gold queries once per model.
    """

    def __init__(self, db_path: str | Path, timeout_ms: int = DEFAULT_TIMEOUT_MS) -> None:
        self.db_path = str(db_path)
        self.timeout_ms = timeout_ms
        self._lock = threading.Lock()
        self._memo: dict[str, ExecutionOutcome] = {}

    def run(self, sql: str) -> ExecutionOutcome:
        with self._lock:
            if sql in self._memo:
                return self._memo[sql]
        outcome = execute(sql, self.db_path, self.timeout_ms)
        with self._lock:
            return self._memo.setdefault(sql, outcome)


def compare_to_ground_truth(
    predicted: str | None,
    gold: str | None,
    db_path: str | Path,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
    cache: ExecutionCache | None = None,
    time_anchor: str | None = None,
) -> Outcome:
    """Judge one prediction against the gold answer.

    Null/Null is correct (correctly refused); Null against real SQL is an
    abstention; SQL against a Null gold is incorrect; otherwise both run and
    must be result-equivalent. A gold query that itself fails raises
    GroundTruthUnexecutableError rather than silently scoring.
    """
    if predicted is None and gold is None:
        return Outcome.CORRECT
    if predicted is None:
        return Outcome.ABSTAINED
    if gold is None:
        return Outcome.INCORRECT
    if time_anchor is not None:
        predicted = substitute_time_anchor(predicted, time_anchor)
        gold = substitute_time_anchor(gold, time_anchor)
    if cache is None:
        cache = ExecutionCache(db_path, timeout_ms)
    gold_outcome = cache.run(gold)
    if gold_outcome.status != "ok":
        raise GroundTruthUnexecutableError(
            f"gold query failed ({gold_outcome.status}): {gold_outcome.error_text}"
        )
    predicted_outcome = cache.run(predicted)
    if predicted_outcome.status != "ok":
        return Outcome.INCORRECT
    return Outcome.CORRECT if equivalent(predicted_outcome, gold_outcome) else Outcome.INCORRECT
