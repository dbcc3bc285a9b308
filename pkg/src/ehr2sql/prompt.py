"""Prompt assembly for SQL generation and finetuning exports.

A prompt is: instruction paragraph, rendered schema block, an `[Examples]`
section of retrieved question/SQL pairs, then the target question followed by
the bare completion cue. The exact byte layout is frozen by golden-file tests;
change nothing here without regenerating them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .dataset import Label, Question, render_answer
from .retrieval import ExemplarSet
from .schema_context import SchemaContext

INSTRUCTION_TEXT = (
    "This is a task converting a natural language question to an SQLite query "
    "for a database. You will be provided with the schema of the SQLite "
    "database followed by a few examples. You need to generate the SQLite "
    'query for a given question and you may return "null" if the question '
    "cannot be answered."
)

EXAMPLES_HEADER = "[Examples]"
QUESTION_MARKER = "[Q]  : "
EXEMPLAR_SQL_MARKER = "[SQL]: "
COMPLETION_CUE = "SQL: "

# chars-per-token divisor for the cheap length estimate
_CHARS_PER_TOKEN = 4


class UnresolvableExemplarError(KeyError):
    """An exemplar hit references a train question with no text or label."""


class PromptShapeError(ValueError):
    """Prompt text does not match the expected marker grammar."""


@dataclass(frozen=True)
class PromptConfig:
    instruction: str = INSTRUCTION_TEXT
    # None = unlimited. When set, lowest-z exemplars are dropped until the
    # prompt fits; the schema block is never truncated.
    char_budget: int | None = None
    most_similar_first: bool = True


@dataclass(frozen=True)
class PromptBundle:
    question_id: str
    text: str
    # train ids in the order they appear in the [Examples] block
    exemplar_ids: tuple[str, ...]
    token_estimate: int


@dataclass(frozen=True)
class FinetuneRecord:
    prompt: str
    completion: str


def token_estimate(text: str) -> int:
    return math.ceil(len(text) / _CHARS_PER_TOKEN)


def build_train_lookup(
    questions: Sequence[Question], labels: Sequence[Label]
) -> dict[str, tuple[str, str | None]]:
    """id -> (question text, answer) for exemplar resolution."""
    answers = {lab.id: lab.answer for lab in labels}
    out = {}
    for q in questions:
        if q.id in answers:
            out[q.id] = (q.text, answers[q.id])
    return out


def _render(
    instruction: str,
    schema_text: str,
    exemplars: Sequence[tuple[str, str, str | None]],
    target_text: str,
) -> str:
    parts = [instruction, "", schema_text, "", EXAMPLES_HEADER]
    for _, ex_text, ex_answer in exemplars:
        parts.append(QUESTION_MARKER + ex_text)
        parts.append(EXEMPLAR_SQL_MARKER + render_answer(ex_answer))
    parts.append(QUESTION_MARKER + target_text)
    parts.append(COMPLETION_CUE)
    return "\n".join(parts)


def build_prompt(
    question: Question,
    exemplars: ExemplarSet,
    train_lookup: Mapping[str, tuple[str, str | None]],
    schema: SchemaContext,
    config: PromptConfig = PromptConfig(),
) -> PromptBundle:
    """Assemble the generation prompt for one question.

    Exemplars render most-similar-first unless configured otherwise. When a
    char budget is set, exemplars are dropped lowest-z-first until the prompt
    fits (the schema stays whole even if the budget is still exceeded).
    """
    resolved = []
    for hit in exemplars.hits:
        entry = train_lookup.get(hit.train_question_id)
        if entry is None:
            raise UnresolvableExemplarError(
                f"exemplar {hit.train_question_id!r} has no train text/label"
            )
        resolved.append((hit.train_question_id, entry[0], entry[1]))

    # hits arrive z-descending; the tail is always the weakest exemplar
    while True:
        display = resolved if config.most_similar_first else list(reversed(resolved))
        text = _render(config.instruction, schema.rendered, display, question.text)
        if config.char_budget is None or len(text) <= config.char_budget or not resolved:
            break
        resolved = resolved[:-1]
    return PromptBundle(
        question_id=question.id,
        text=text,
        exemplar_ids=tuple(ex_id for ex_id, _, _ in display),
        token_estimate=token_estimate(text),
    )


@dataclass(frozen=True)
class ParsedPrompt:
    exemplar_pairs: tuple[tuple[str, str], ...]
    target_text: str


def parse_prompt(text: str) -> ParsedPrompt:
    """Strict structural parse of a rendered prompt; raises PromptShapeError.

    Checks: exactly one schema header and one examples header, alternating
    question/SQL exemplar pairs, a trailing target question, and the bare
    completion cue as the final line.
    """
    lines = text.split("\n")
    from .schema_context import HEADER as SCHEMA_HEADER

    if sum(1 for ln in lines if ln == SCHEMA_HEADER) != 1:
        raise PromptShapeError("expected exactly one schema header")
    if sum(1 for ln in lines if ln == EXAMPLES_HEADER) != 1:
        raise PromptShapeError("expected exactly one examples header")
    if lines[-1] != COMPLETION_CUE:
        raise PromptShapeError(f"prompt must end with {COMPLETION_CUE!r} line")
    body = lines[lines.index(EXAMPLES_HEADER) + 1 : -1]
    questions: list[str] = []
    answers: list[str] = []
    for ln in body:
        if ln.startswith(QUESTION_MARKER):
            if len(questions) != len(answers):
                raise PromptShapeError("question marker while an answer was pending")
            questions.append(ln[len(QUESTION_MARKER) :])
        elif ln.startswith(EXEMPLAR_SQL_MARKER):
            if len(questions) != len(answers) + 1:
                raise PromptShapeError("answer marker without a preceding question")
            answers.append(ln[len(EXEMPLAR_SQL_MARKER) :])
        else:
            if not answers:
                raise PromptShapeError(f"unexpected line in examples block: {ln!r}")
            # continuation of a multi-line exemplar answer
            answers[-1] += "\n" + ln
    if len(questions) != len(answers) + 1:
        raise PromptShapeError("examples block must end with the target question")
    return ParsedPrompt(
        exemplar_pairs=tuple(zip(questions[:-1], answers)),
        target_text=questions[-1],
    )


def export_raft(
    train_questions: Sequence[Question],
    train_labels: Sequence[Label],
    schema: SchemaContext,
    providers: Sequence,
    n: int,
    config: PromptConfig = PromptConfig(),
) -> list[FinetuneRecord]:
    """Build one finetuning record per train question.

    Exemplars come from the train set itself with the target excluded before
    retrieval, so no record can cite itself. Completions are the gold SQL or
    the null marker.
    """
    from .retrieval import retrieve

    lookup = build_train_lookup(train_questions, train_labels)
    missing = [q.id for q in train_questions if q.id not in lookup]
    if missing:
        raise ValueError(f"train questions without labels: {missing[:5]}")
    exemplar_sets = retrieve(
        train_questions, train_questions, providers, n, exclude_same_id=True
    )
    records = []
    for question, ex_set in zip(train_questions, exemplar_sets):
        bundle = build_prompt(question, ex_set, lookup, schema, config)
        if question.id in bundle.exemplar_ids:
            raise AssertionError(f"self-exemplar leaked for {question.id}")
        records.append(
            FinetuneRecord(
                prompt=bundle.text,
                completion=render_answer(lookup[question.id][1]),
            )
        )
    return records


def write_raft_jsonl(records: Sequence[FinetuneRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {"prompt": rec.prompt, "completion": rec.completion},
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_raft_jsonl(path: str | Path) -> list[FinetuneRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            records.append(FinetuneRecord(prompt=doc["prompt"], completion=doc["completion"]))
    return records
