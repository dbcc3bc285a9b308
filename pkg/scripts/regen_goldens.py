"""Regenerate the byte-frozen snapshots under tests/goldens/.

Run after any deliberate change to schema rendering or prompt assembly, then
review the diff before committing:

    python3 scripts/regen_goldens.py
"""

from __future__ import annotations

import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

from build_mini_fixture import build_prompt_fixture_db

from ehr2sql import schema_context
from ehr2sql.dataset import Label, Question
from ehr2sql.prompt import PromptConfig, build_prompt, build_train_lookup
from ehr2sql.retrieval import ExemplarHit, ExemplarSet

GOLDENS_DIR = Path(__file__).resolve().parent.parent / "tests" / "goldens"

_TRAIN = [
    Question("train_0001", "how many patients are there?", "train"),
    Question("train_0002", "what is the dose of aspirin prescribed to patient 201?", "train"),
    Question("train_0003", "who is the tallest patient?", "train"),
]
_LABELS = [
    Label("train_0001", "SELECT count(*) FROM patients"),
    Label("train_0002",
          "SELECT dose_val_rx FROM prescriptions"
          " WHERE subject_id = 201 AND drug = 'aspirin'"),
    Label("train_0003", None),
]
_QUESTION = Question("valid_0001", "what is the gender of patient 201?", "valid")


def golden_cases() -> dict[str, str]:
    """Produce every snapshot's current text, keyed by file name."""
    with tempfile.TemporaryDirectory() as tmp:
        db_path = build_prompt_fixture_db(Path(tmp) / "prompt_fixture.db")
        sampled = schema_context.introspect(db_path, with_samples=True)
        plain = schema_context.introspect(db_path, with_samples=False)

    lookup = build_train_lookup(_TRAIN, _LABELS)
    no_exemplars = ExemplarSet(_QUESTION.id, [], 0)
    two_exemplars = ExemplarSet(
        _QUESTION.id,
        [
            ExemplarHit("train_0002", 0.91, 1.40, "emb_alpha"),
            ExemplarHit("train_0003", 0.55, 0.20, "emb_beta"),
        ],
        2,
    )
    three_exemplars = ExemplarSet(
        _QUESTION.id,
        [
            ExemplarHit("train_0002", 0.91, 1.40, "emb_alpha"),
            ExemplarHit("train_0001", 0.76, 0.95, "emb_alpha"),
            ExemplarHit("train_0003", 0.55, 0.20, "emb_beta"),
        ],
        3,
    )
    config = PromptConfig()
    return {
        "schema_sampled.txt": sampled.rendered,
        "schema_plain.txt": plain.rendered,
        "prompt_no_exemplars.txt": build_prompt(
            _QUESTION, no_exemplars, lookup, sampled, config
        ).text,
        "prompt_two_exemplars.txt": build_prompt(
            _QUESTION, two_exemplars, lookup, sampled, config
        ).text,
        "prompt_three_exemplars_oldest_first.txt": build_prompt(
            _QUESTION,
            three_exemplars,
            lookup,
            plain,
            PromptConfig(most_similar_first=False),
        ).text,
    }


def main() -> int:
    GOLDENS_DIR.mkdir(parents=True, exist_ok=True)
    for name, text in golden_cases().items():
        path = GOLDENS_DIR / name
        path.write_text(text, encoding="utf-8")
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
