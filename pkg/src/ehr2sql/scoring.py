"""Cost-penalized reliability scoring and report rendering.

The reliability score at cost C is 100 * (n_correct - C * n_wrong) / N.
In "task" mode an abstention contributes zero; in "strict" mode abstaining on
an answerable question is penalized exactly like a wrong answer. At C=0 both
modes coincide. Scores are linear in C: RS(C) = RS(0) - 100*C*n_wrong/N.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping, Sequence

from .sql_exec import ExecutionOutcome, Outcome

MODES = ("task", "strict")

DEFAULT_COSTS = (0, 5, 10)


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreReport:
    n: int
    n_correct: int
    n_incorrect: int
    n_abstained: int
    # cost -> percentage score, and cost -> unnormalized sum
    rs: dict[float, float]
    rs_raw: dict[float, float]
    unanswered_pct: float
    executable_pct: float
    # False when there were no SQL predictions at all (executable_pct is
    # then 100.0 by convention)
    executable_defined: bool
    mode: str


def count_outcomes(outcomes: Sequence[Outcome]) -> tuple[int, int, int]:
    n_correct = sum(1 for o in outcomes if o == Outcome.CORRECT)
    n_incorrect = sum(1 for o in outcomes if o == Outcome.INCORRECT)
    n_abstained = len(outcomes) - n_correct - n_incorrect
    return n_correct, n_incorrect, n_abstained


def _penalized(n_incorrect: int, n_abstained: int, mode: str) -> int:
    if mode == "task":
        return n_incorrect
    if mode == "strict":
        return n_incorrect + n_abstained
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def reliability_score(outcomes: Sequence[Outcome], cost: float, mode: str = "task") -> float:
    """Percentage score at penalty `cost`; monotone non-increasing in cost."""
    if not outcomes:
        raise ValueError("cannot score an empty outcome vector")
    n_correct, n_incorrect, n_abstained = count_outcomes(outcomes)
    wrong = _penalized(n_incorrect, n_abstained, mode)
    return 100.0 * (n_correct - cost * wrong) / len(outcomes)


def summarize(
    outcomes: Sequence[Outcome],
    predictions: Sequence[str | None],
    execution_results: Sequence[ExecutionOutcome | None],
    costs: Sequence[float] = DEFAULT_COSTS,
    mode: str = "task",
) -> ScoreReport:
    """Aggregate one run's outcomes into scores plus coverage statistics.

    All three sequences are aligned by question order. Every SQL prediction
    must carry an execution result (for the executable rate); Null
    predictions carry None.
    """
    n = len(outcomes)
    if n == 0:
        raise ValueError("cannot summarize an empty run")
    if len(predictions) != n or len(execution_results) != n:
        raise AlignmentError(
            f"outcomes/predictions/executions misaligned: {n}/{len(predictions)}/{len(execution_results)}"
        )
    n_correct, n_incorrect, n_abstained = count_outcomes(outcomes)
    wrong = _penalized(n_incorrect, n_abstained, mode)

    n_null = sum(1 for p in predictions if p is None)
    sql_indices = [i for i, p in enumerate(predictions) if p is not None]
    for i in sql_indices:
        if execution_results[i] is None:
            raise AlignmentError(f"SQL prediction at position {i} has no execution result")
    if sql_indices:
        n_ok = sum(1 for i in sql_indices if execution_results[i].status == "ok")
        executable_pct = 100.0 * n_ok / len(sql_indices)
        executable_defined = True
    else:
        executable_pct = 100.0
        executable_defined = False

    rs = {}
    rs_raw = {}
    for cost in costs:
        rs[cost] = 100.0 * (n_correct - cost * wrong) / n
        rs_raw[cost] = float(n_correct - cost * wrong)
    return ScoreReport(
        n=n,
        n_correct=n_correct,
        n_incorrect=n_incorrect,
        n_abstained=n_abstained,
        rs=rs,
        rs_raw=rs_raw,
        unanswered_pct=100.0 * n_null / n,
        executable_pct=executable_pct,
        executable_defined=executable_defined,
        mode=mode,
    )


def _cost_key(cost: float) -> str:
    return str(int(cost)) if float(cost) == int(cost) else str(cost)


def round_display(value: float) -> str:
    """2-decimal display rounding, halves away from zero."""
    return str(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def report_json(reports: Mapping[str, ScoreReport]) -> str:
    doc = {}
    for label, rep in reports.items():
        doc[label] = {
            "rs": {_cost_key(c): rep.rs[c] for c in rep.rs},
            "rs_raw": {_cost_key(c): rep.rs_raw[c] for c in rep.rs_raw},
            "unanswered_pct": rep.unanswered_pct,
            "executable_pct": rep.executable_pct,
            "counts": {
                "correct": rep.n_correct,
                "incorrect": rep.n_incorrect,
                "abstained": rep.n_abstained,
                "total": rep.n,
            },
        }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def render_table(reports: Mapping[str, ScoreReport]) -> str:
    """Fixed-width text table; one row per run label."""
    if not reports:
        return "(no runs)\n"
    first = next(iter(reports.values()))
    costs = list(first.rs.keys())
    header = ["run"] + [f"RS{_cost_key(c)}" for c in costs] + ["Unans%", "Exec%"]
    rows = [header]
    for label, rep in reports.items():
        cells = [label]
        cells += [round_display(rep.rs.get(c, float("nan"))) for c in costs]
        cells.append(round_display(rep.unanswered_pct))
        exec_cell = round_display(rep.executable_pct)
        if not rep.executable_defined:
            exec_cell += "*"
        cells.append(exec_cell)
        rows.append(cells)
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for row in rows:
        lines.append(
            "  ".join(
                cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i])
                for i, cell in enumerate(row)
            ).rstrip()
        )
    note = "\n* no SQL predictions; executable rate vacuous\n"
    has_vacuous = any(not rep.executable_defined for rep in reports.values())
    return "\n".join(lines) + (note if has_vacuous else "\n")
