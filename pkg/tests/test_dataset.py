import json

import pytest

from ehr2sql import dataset
from ehr2sql.dataset import (
    DanglingLabelError,
    Label,
    MalformedFileError,
    Question,
    is_null_marker,
    parse_answer,
    render_answer,
)


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def test_null_marker_variants():
    assert is_null_marker("null")
    assert is_null_marker("NULL")
    assert is_null_marker("  Null\n")
    assert not is_null_marker("nullable")
    assert not is_null_marker("SELECT null")


def test_parse_answer():
    assert parse_answer("SELECT 1") == "SELECT 1"
    assert parse_answer("null") is None
    assert parse_answer(" NULL ") is None
    with pytest.raises(MalformedFileError):
        parse_answer(42)
    with pytest.raises(MalformedFileError):
        parse_answer("   ")


def test_render_answer_round_trip():
    assert render_answer(None) == "null"
    assert parse_answer(render_answer("SELECT 1")) == "SELECT 1"
    assert parse_answer(render_answer(None)) is None


def test_load_questions_flat_map(tmp_path):
    path = write(tmp_path, "q.json", {"q2": "second?", "q1": "first?"})
    questions = dataset.load_questions(path, "valid")
    # file order, not sorted order
    assert [q.id for q in questions] == ["q2", "q1"]
    assert questions[0] == Question("q2", "second?", "valid")


def test_load_questions_envelope(tmp_path):
    path = write(
        tmp_path,
        "q.json",
        {"data": [{"id": "a", "question": "one?"}, {"id": "b", "question": "two?"}]},
    )
    questions = dataset.load_questions(path, "train")
    assert [(q.id, q.text, q.split) for q in questions] == [
        ("a", "one?", "train"),
        ("b", "two?", "train"),
    ]


@pytest.mark.parametrize(
    "doc",
    [
        ["not", "a", "map"],
        {"data": "not a list"},
        {"data": [{"id": "a"}]},
        {"data": [{"id": "a", "question": "x?", "extra": 1}]},
        {"data": [{"id": "a", "question": "x?"}, {"id": "a", "question": "y?"}]},
        {"data": [{"id": "", "question": "x?"}]},
        {"data": [{"id": "a", "question": "   "}]},
        {"q1": ""},
        {"q1": 7},
    ],
)
def test_load_questions_rejects_malformed(tmp_path, doc):
    path = write(tmp_path, "bad.json", doc)
    with pytest.raises(MalformedFileError):
        dataset.load_questions(path, "valid")


def test_load_questions_rejects_bad_split(tmp_path):
    path = write(tmp_path, "q.json", {"q1": "x?"})
    with pytest.raises(ValueError):
        dataset.load_questions(path, "dev")


def test_load_questions_missing_file(tmp_path):
    with pytest.raises(MalformedFileError):
        dataset.load_questions(tmp_path / "absent.json", "valid")


def test_load_questions_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(MalformedFileError):
        dataset.load_questions(path, "valid")


def test_load_labels_null_and_sql(tmp_path):
    path = write(tmp_path, "l.json", {"q1": "SELECT 1", "q2": "null"})
    labels = dataset.load_labels(path)
    assert labels == [Label("q1", "SELECT 1"), Label("q2", None)]


def test_load_split_dangling_label(tmp_path):
    q = write(tmp_path, "q.json", {"q1": "x?"})
    l = write(tmp_path, "l.json", {"q1": "SELECT 1", "ghost": "SELECT 2"})
    with pytest.raises(DanglingLabelError):
        dataset.load_split(q, l, "valid")


def test_load_split_unlabeled_questions_ok(tmp_path):
    q = write(tmp_path, "q.json", {"q1": "x?", "q2": "y?"})
    l = write(tmp_path, "l.json", {"q1": "SELECT 1"})
    questions, labels = dataset.load_split(q, l, "valid")
    assert len(questions) == 2
    assert len(labels) == 1


def test_load_split_without_labels(tmp_path):
    q = write(tmp_path, "q.json", {"q1": "x?"})
    questions, labels = dataset.load_split(q, None, "test")
    assert len(questions) == 1
    assert labels == []


def test_stats():
    labels = [Label("a", "SELECT 1"), Label("b", None), Label("c", None), Label("d", "SELECT 2")]
    s = dataset.stats(labels)
    assert s.total == 4
    assert s.unanswerable_fraction == 0.5
    assert dataset.stats([]) == dataset.SplitStats(0, 0.0)


def test_save_load_round_trip(tmp_path):
    questions = [Question("q1", "first?", "valid"), Question("q2", "second?", "valid")]
    labels = [Label("q1", "SELECT 1"), Label("q2", None)]
    qp, lp = tmp_path / "q.json", tmp_path / "l.json"
    dataset.save_questions(questions, qp)
    dataset.save_labels(labels, lp)
    back_q, back_l = dataset.load_split(qp, lp, "valid")
    assert back_q == questions
    assert back_l == labels


def test_predictions_round_trip(tmp_path):
    preds = {"q1": "SELECT 1", "q2": None}
    path = tmp_path / "p.json"
    dataset.save_predictions(preds, path)
    assert json.loads(path.read_text())["q2"] == "null"
    assert dataset.load_predictions(path) == preds


def test_mini_fixture_split_shapes(mini_fixture):
    root, _ = mini_fixture
    train_q, train_l = dataset.load_split(
        root / "data" / "train_questions.json", root / "data" / "train_labels.json", "train"
    )
    valid_q, valid_l = dataset.load_split(
        root / "data" / "valid_questions.json", root / "data" / "valid_labels.json", "valid"
    )
    assert len(train_q) == len(train_l) == 30
    assert len(valid_q) == len(valid_l) == 20
    assert dataset.stats(valid_l).unanswerable_fraction == pytest.approx(0.2)
