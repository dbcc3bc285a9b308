"""Cross-model agreement validation.

An ensemble emits SQL only when every member's query executes and returns the
same result set; any disagreement, member failure, or Null/SQL mix makes it
abstain. Validation can only turn answers into abstentions, never invent or
repair SQL, which is what trades raw coverage for reliability.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .llm import ModelConfig
from .sql_exec import (
    DEFAULT_TIMEOUT_MS,
    ExecutionCache,
    ExecutionOutcome,
    equivalent,
    substitute_time_anchor,
)

UNANIMOUS_SQL = "unanimous_sql"
UNANIMOUS_NULL = "unanimous_null"
DISAGREEMENT = "disagreement"


class UnknownModelIdError(KeyError):
    pass


class MissingPredictionError(KeyError):
    pass


@dataclass(frozen=True)
class MemberOutput:
    model_id: str
    answer: str | None
    outcome: ExecutionOutcome | None


@dataclass(frozen=True)
class EnsembleDecision:
    question_id: str
    final: str | None
    member_outputs: tuple[MemberOutput, ...]
    agreement: str


def validate(
    question_id: str,
    candidates: Sequence[tuple[ModelConfig, str | None]],
    db_path: str | Path,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
    cache: ExecutionCache | None = None,
    time_anchor: str | None = None,
    ignore_failing_members: bool = False,
) -> EnsembleDecision:
    """Decide one question from per-model answers.

    All-Null is a unanimous refusal. A Null/SQL mix is a disagreement. With
    all members answering, every query must execute and all result sets must
    match; the emitted SQL comes from the highest-priority member (lowest
    priority number, earliest config position on ties). A failing member
    forces disagreement unless ignore_failing_members drops it from the
    unanimity check instead.
    """
    if not candidates:
        raise ValueError("validate needs at least one candidate")
    if len(candidates) == 1:
        config, answer = candidates[0]
        agreement = UNANIMOUS_SQL if answer is not None else UNANIMOUS_NULL
        return EnsembleDecision(
            question_id=question_id,
            final=answer,
            member_outputs=(MemberOutput(config.model_id, answer, None),),
            agreement=agreement,
        )

    answers = [answer for _, answer in candidates]
    if all(a is None for a in answers):
        members = tuple(MemberOutput(c.model_id, None, None) for c, _ in candidates)
        return EnsembleDecision(question_id, None, members, UNANIMOUS_NULL)
    if any(a is None for a in answers):
        members = tuple(MemberOutput(c.model_id, a, None) for c, a in candidates)
        return EnsembleDecision(question_id, None, members, DISAGREEMENT)

    if cache is None:
        cache = ExecutionCache(db_path, timeout_ms)
    executed = []
    for config, answer in candidates:
        sql = answer if time_anchor is None else substitute_time_anchor(answer, time_anchor)
        executed.append((config, answer, cache.run(sql)))
    members = tuple(MemberOutput(c.model_id, a, out) for c, a, out in executed)

    considered = executed
    if ignore_failing_members:
        considered = [e for e in executed if e[2].status == "ok"]
        if not considered:
            return EnsembleDecision(question_id, None, members, DISAGREEMENT)
    elif any(out.status != "ok" for _, _, out in executed):
        return EnsembleDecision(question_id, None, members, DISAGREEMENT)

    reference = considered[0][2]
    if not all(equivalent(reference, out) for _, _, out in considered[1:]):
        return EnsembleDecision(question_id, None, members, DISAGREEMENT)

    # stable min: earliest candidate among the lowest priority numbers
    winner = min(considered, key=lambda e: e[0].priority)
    return EnsembleDecision(question_id, winner[1], members, UNANIMOUS_SQL)


def sweep_ensembles(
    per_model_predictions: Mapping[str, Mapping[str, str | None]],
    subsets: Sequence[Sequence[str]],
    models: Sequence[ModelConfig],
    db_path: str | Path,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
    cache: ExecutionCache | None = None,
    time_anchor: str | None = None,
    ignore_failing_members: bool = False,
) -> dict[tuple[str, ...], dict[str, str | None]]:
    """Run validation over every configured model subset.

    Returns one prediction map per subset, in the question order of the first
    member's file. Every member must cover the same question ids.
    """
    configs = {m.model_id: m for m in models}
    if cache is None:
        cache = ExecutionCache(db_path, timeout_ms)
    results: dict[tuple[str, ...], dict[str, str | None]] = {}
    for subset in subsets:
        subset_key = tuple(subset)
        if not subset_key:
            raise ValueError("empty ensemble subset")
        for model_id in subset_key:
            if model_id not in configs:
                raise UnknownModelIdError(f"no model config for {model_id!r}")
            if model_id not in per_model_predictions:
                raise UnknownModelIdError(f"no predictions for {model_id!r}")
        first = per_model_predictions[subset_key[0]]
        question_ids = list(first.keys())
        for model_id in subset_key[1:]:
            preds = per_model_predictions[model_id]
            missing = [qid for qid in question_ids if qid not in preds]
            extra = [qid for qid in preds if qid not in first]
            if missing or extra:
                raise MissingPredictionError(
                    f"{model_id!r} prediction ids diverge from {subset_key[0]!r} "
                    f"(missing {missing[:3]}, extra {extra[:3]})"
                )
        decided: dict[str, str | None] = {}
        for qid in question_ids:
            candidates = [
                (configs[model_id], per_model_predictions[model_id][qid])
                for model_id in subset_key
            ]
            decision = validate(
                qid,
                candidates,
                db_path,
                timeout_ms,
                cache=cache,
                time_anchor=time_anchor,
                ignore_failing_members=ignore_failing_members,
            )
            decided[qid] = decision.final
        results[subset_key] = decided
    return results
