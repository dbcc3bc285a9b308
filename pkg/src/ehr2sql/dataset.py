"""Question/label file loading for EHR text-to-SQL splits.

Question files are JSON, either a flat map ``{"q1": "question text"}`` or an
enveloped list ``{"data": [{"id": "q1", "question": "..."}]}``. Label and
prediction files are flat maps from question id to a SQL string or the
unanswerable marker ``"null"``. File order is preserved everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

NULL_MARKER = "null"

SPLITS = ("train", "valid", "test")


class MalformedFileError(ValueError):
    """A question/label file violates the expected JSON shape."""


class DanglingLabelError(ValueError):
    """A label references a question id that does not exist in the split."""


def is_null_marker(text: str) -> bool:
    """True if the string is the unanswerable marker, ignoring case and padding."""
    return text.strip().lower() == NULL_MARKER


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    split: str


@dataclass(frozen=True)
class Label:
    id: str
    # None means the question is marked unanswerable.
    answer: str | None


@dataclass(frozen=True)
class SplitStats:
    total: int
    unanswerable_fraction: float


def parse_answer(raw: object, *, context: str = "label") -> str | None:
    """Parse a raw JSON label value into SQL text or None (unanswerable)."""
    if not isinstance(raw, str):
        raise MalformedFileError(f"{context} value must be a string, got {type(raw).__name__}")
    if is_null_marker(raw):
        return None
    if not raw.strip():
        raise MalformedFileError(f"{context} value is empty")
    return raw


def render_answer(answer: str | None) -> str:
    return NULL_MARKER if answer is None else answer


def _read_json(path: str | Path) -> object:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedFileError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{path} is not valid JSON: {exc}") from exc


def _questions_from_envelope(doc: dict, split: str, path: str | Path) -> list[Question]:
    extra = set(doc) - {"data"}
    if extra:
        raise MalformedFileError(f"{path}: unknown top-level keys {sorted(extra)}")
    records = doc["data"]
    if not isinstance(records, list):
        raise MalformedFileError(f"{path}: 'data' must be a list")
    out: list[Question] = []
    seen: set[str] = set()
    for i, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise MalformedFileError(f"{path}: data[{i}] is not an object")
        unknown = set(rec) - {"id", "question"}
        if unknown:
            raise MalformedFileError(f"{path}: data[{i}] has unknown keys {sorted(unknown)}")
        if "id" not in rec or "question" not in rec:
            raise MalformedFileError(f"{path}: data[{i}] needs 'id' and 'question'")
        qid, text = rec["id"], rec["question"]
        if not isinstance(qid, str) or not qid:
            raise MalformedFileError(f"{path}: data[{i}] id must be a non-empty string")
        if not isinstance(text, str) or not text.strip():
            raise MalformedFileError(f"{path}: data[{i}] question text is empty")
        if qid in seen:
            raise MalformedFileError(f"{path}: duplicate question id {qid!r}")
        seen.add(qid)
        out.append(Question(id=qid, text=text, split=split))
    return out


def load_questions(path: str | Path, split: str) -> list[Question]:
    """Load a question file (flat map or enveloped list), preserving file order."""
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise MalformedFileError(f"{path}: top level must be a JSON object")
    if set(doc) == {"data"}:
        return _questions_from_envelope(doc, split, path)
    out = []
    for qid, text in doc.items():
        if not qid:
            raise MalformedFileError(f"{path}: empty question id")
        if not isinstance(text, str) or not text.strip():
            raise MalformedFileError(f"{path}: question {qid!r} text is empty")
        out.append(Question(id=qid, text=text, split=split))
    return out


def load_labels(path: str | Path) -> list[Label]:
    """Load a label file: JSON map id -> SQL string or the null marker."""
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise MalformedFileError(f"{path}: top level must be a JSON object")
    out = []
    for qid, raw in doc.items():
        if not qid:
            raise MalformedFileError(f"{path}: empty label id")
        out.append(Label(id=qid, answer=parse_answer(raw, context=f"label {qid!r}")))
    return out


def load_split(
    questions_file: str | Path,
    labels_file: str | Path | None = None,
    split: str = "valid",
) -> tuple[list[Question], list[Label]]:
    """Load questions plus (optionally) labels, checking label/question alignment.

    Every label id must name a loaded question; unlabeled questions are fine
    (test splits ship without labels).
    """
    questions = load_questions(questions_file, split)
    if labels_file is None:
        return questions, []
    labels = load_labels(labels_file)
    known = {q.id for q in questions}
    dangling = [lab.id for lab in labels if lab.id not in known]
    if dangling:
        raise DanglingLabelError(
            f"{labels_file}: labels without questions: {dangling[:5]}"
            + ("..." if len(dangling) > 5 else "")
        )
    return questions, labels


def stats(labels: list[Label]) -> SplitStats:
    total = len(labels)
    if total == 0:
        return SplitStats(total=0, unanswerable_fraction=0.0)
    nulls = sum(1 for lab in labels if lab.answer is None)
    return SplitStats(total=total, unanswerable_fraction=nulls / total)


def save_questions(questions: list[Question], path: str | Path) -> None:
    doc = {q.id: q.text for q in questions}
    _write_json(doc, path)


def save_labels(labels: list[Label], path: str | Path) -> None:
    doc = {lab.id: render_answer(lab.answer) for lab in labels}
    _write_json(doc, path)


def load_predictions(path: str | Path) -> dict[str, str | None]:
    """Prediction files share the label format; returns id -> SQL-or-None."""
    return {lab.id: lab.answer for lab in load_labels(path)}


def save_predictions(predictions: dict[str, str | None], path: str | Path) -> None:
    _write_json({qid: render_answer(ans) for qid, ans in predictions.items()}, path)


def _write_json(doc: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
