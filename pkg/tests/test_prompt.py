import math

import pytest

from conftest import load_script, read_golden
from ehr2sql import prompt, schema_context
from ehr2sql.dataset import Label, Question
from ehr2sql.prompt import (
    COMPLETION_CUE,
    EXAMPLES_HEADER,
    EXEMPLAR_SQL_MARKER,
    INSTRUCTION_TEXT,
    QUESTION_MARKER,
    PromptConfig,
    PromptShapeError,
    UnresolvableExemplarError,
    build_prompt,
    build_train_lookup,
    parse_prompt,
    read_raft_jsonl,
    token_estimate,
    write_raft_jsonl,
)
from ehr2sql.retrieval import ExemplarHit, ExemplarSet


def test_markers_frozen():
    assert INSTRUCTION_TEXT == (
        "This is a task converting a natural language question to an SQLite"
        " query for a database. You will be provided with the schema of the"
        " SQLite database followed by a few examples. You need to generate"
        " the SQLite query for a given question and you may return \"null\""
        " if the question cannot be answered."
    )
    assert EXAMPLES_HEADER == "[Examples]"
    assert QUESTION_MARKER == "[Q]  : "
    assert EXEMPLAR_SQL_MARKER == "[SQL]: "
    assert COMPLETION_CUE == "SQL: "
    assert schema_context.HEADER == "[Database Tables]"


def test_token_estimate():
    assert token_estimate("") == 0
    assert token_estimate("abcd") == 1
    assert token_estimate("abcde") == 2


@pytest.fixture(scope="module")
def golden_cases():
    return load_script("regen_goldens").golden_cases()


@pytest.mark.parametrize(
    "name",
    [
        "prompt_no_exemplars.txt",
        "prompt_two_exemplars.txt",
        "prompt_three_exemplars_oldest_first.txt",
    ],
)
def test_prompt_goldens_byte_exact(golden_cases, name):
    assert golden_cases[name] == read_golden(name)


def test_prompt_shape(golden_cases):
    text = golden_cases["prompt_two_exemplars.txt"]
    assert text.startswith(INSTRUCTION_TEXT + "\n\n" + schema_context.HEADER)
    assert text.count(EXAMPLES_HEADER) == 1
    # exemplar pairs plus the target question
    assert text.count(QUESTION_MARKER) == 3
    assert text.count(EXEMPLAR_SQL_MARKER) == 2
    assert text.endswith("\n" + COMPLETION_CUE)
    assert text.splitlines()[-1] == COMPLETION_CUE.rstrip() + " "


def _tiny_schema():
    return schema_context.SchemaContext(
        tables=(), rendered="[Database Tables]\nCREATE TABLE t\n(\n  a int\n);"
    )


def _lookup():
    questions = [
        Question("t1", "first train question?", "train"),
        Question("t2", "second train question?", "train"),
        Question("t3", "third train question?", "train"),
    ]
    labels = [
        Label("t1", "SELECT 1"),
        Label("t2", None),
        Label("t3", "SELECT 3"),
    ]
    return build_train_lookup(questions, labels)


def _hits(*ids):
    z = 2.0
    out = []
    for train_id in ids:
        out.append(ExemplarHit(train_id, z / 4, z, "m"))
        z -= 0.5
    return out


def test_build_prompt_orders_most_similar_first():
    question = Question("v1", "target?", "valid")
    exemplars = ExemplarSet("v1", _hits("t1", "t3"), 2)
    bundle = build_prompt(question, exemplars, _lookup(), _tiny_schema())
    parsed = parse_prompt(bundle.text)
    assert parsed.exemplar_pairs == (
        ("first train question?", "SELECT 1"),
        ("third train question?", "SELECT 3"),
    )
    assert bundle.exemplar_ids == ("t1", "t3")
    assert parsed.target_text == "target?"


def test_build_prompt_oldest_first_flag():
    question = Question("v1", "target?", "valid")
    exemplars = ExemplarSet("v1", _hits("t1", "t3"), 2)
    bundle = build_prompt(
        question, exemplars, _lookup(), _tiny_schema(),
        PromptConfig(most_similar_first=False),
    )
    parsed = parse_prompt(bundle.text)
    assert parsed.exemplar_pairs[0] == ("third train question?", "SELECT 3")
    # exemplar_ids follow display order
    assert bundle.exemplar_ids == ("t3", "t1")


def test_build_prompt_null_exemplar_renders_marker():
    question = Question("v1", "target?", "valid")
    exemplars = ExemplarSet("v1", _hits("t2"), 1)
    bundle = build_prompt(question, exemplars, _lookup(), _tiny_schema())
    assert f"{EXEMPLAR_SQL_MARKER}null\n" in bundle.text


def test_build_prompt_unknown_exemplar():
    question = Question("v1", "target?", "valid")
    exemplars = ExemplarSet("v1", _hits("ghost"), 1)
    with pytest.raises(UnresolvableExemplarError):
        build_prompt(question, exemplars, _lookup(), _tiny_schema())


def test_char_budget_drops_weakest_exemplars_first():
    question = Question("v1", "target?", "valid")
    exemplars = ExemplarSet("v1", _hits("t1", "t3", "t2"), 3)
    full = build_prompt(question, exemplars, _lookup(), _tiny_schema())
    budget = len(full.text) - 1
    trimmed = build_prompt(
        question, exemplars, _lookup(), _tiny_schema(),
        PromptConfig(char_budget=budget),
    )
    assert trimmed.exemplar_ids == ("t1", "t3")
    assert len(trimmed.text) <= budget


def test_char_budget_never_drops_schema():
    question = Question("v1", "target?", "valid")
    exemplars = ExemplarSet("v1", _hits("t1"), 1)
    bundle = build_prompt(
        question, exemplars, _lookup(), _tiny_schema(), PromptConfig(char_budget=10)
    )
    assert bundle.exemplar_ids == ()
    assert schema_context.HEADER in bundle.text
    assert len(bundle.text) > 10


def test_token_estimate_on_bundle():
    question = Question("v1", "target?", "valid")
    bundle = build_prompt(
        question, ExemplarSet("v1", [], 0), _lookup(), _tiny_schema()
    )
    assert bundle.token_estimate == math.ceil(len(bundle.text) / 4)


def test_parse_prompt_round_trip_multiline_sql():
    lookup = {
        "t1": ("question one?", "SELECT a\nFROM t\nWHERE x = 1"),
    }
    question = Question("v1", "target?", "valid")
    exemplars = ExemplarSet("v1", _hits("t1"), 1)
    bundle = build_prompt(question, exemplars, lookup, _tiny_schema())
    parsed = parse_prompt(bundle.text)
    assert parsed.exemplar_pairs == (("question one?", "SELECT a\nFROM t\nWHERE x = 1"),)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda t: t.replace("[Database Tables]", "[database tables]"),
        lambda t: t.replace("[Examples]", ""),
        lambda t: t + "trailing",
        lambda t: t.replace("SQL: ", "", 1),
        lambda t: t.replace("[Q]  : target?", ""),
    ],
)
def test_parse_prompt_rejects_malformed(golden_cases, mutate):
    base = golden_cases["prompt_two_exemplars.txt"].replace(
        "[Q]  : what is the gender of patient 201?", "[Q]  : target?"
    )
    broken = mutate(base)
    with pytest.raises(PromptShapeError):
        parse_prompt(broken)


def test_unlabeled_train_question_unresolvable_as_exemplar():
    # the lookup drops unlabeled questions; resolution then fails at build time
    lookup = build_train_lookup([Question("t1", "q?", "train")], [])
    assert lookup == {}
    question = Question("v1", "target?", "valid")
    with pytest.raises(UnresolvableExemplarError):
        build_prompt(question, ExemplarSet("v1", _hits("t1"), 1), lookup, _tiny_schema())


def test_raft_jsonl_round_trip(tmp_path):
    records = [
        prompt.FinetuneRecord("prompt text\nwith newline", "SELECT 1"),
        prompt.FinetuneRecord("another", "null"),
    ]
    path = tmp_path / "train.jsonl"
    write_raft_jsonl(records, path)
    assert read_raft_jsonl(path) == records
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2


def test_export_raft_self_exclusion_and_completions(mini_fixture):
    from ehr2sql import dataset, llm
    from ehr2sql.config import load_config
    from ehr2sql.dataset import render_answer

    root, config_path = mini_fixture
    config = load_config(config_path)
    train_q, train_l = dataset.load_split(
        config.paths.train_questions, config.paths.train_labels, "train"
    )
    providers = [llm.build_embedding_provider(c) for c in config.embedding_providers]
    schema = schema_context.introspect(config.paths.db)
    records = prompt.export_raft(
        train_q, train_l, schema, providers, 3, PromptConfig()
    )
    assert len(records) == len(train_q)
    by_id = dict(zip([q.id for q in train_q], records))
    lookup = build_train_lookup(train_q, train_l)
    for question in train_q:
        record = by_id[question.id]
        parsed = parse_prompt(record.prompt)
        assert parsed.target_text == question.text
        # a question must never retrieve itself as an exemplar
        own_pair = (question.text, render_answer(lookup[question.id][1]))
        assert own_pair not in parsed.exemplar_pairs
        assert len(parsed.exemplar_pairs) == 3
    nulls = [r for r in records if r.completion == "null"]
    assert len(nulls) == 3
