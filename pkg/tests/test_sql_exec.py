import hashlib
import sqlite3

import pytest

from ehr2sql.sql_exec import (
    ExecutionCache,
    ExecutionOutcome,
    GroundTruthUnexecutableError,
    Outcome,
    compare_to_ground_truth,
    equivalent,
    execute,
    normalize_rows,
    normalize_value,
    substitute_time_anchor,
)


@pytest.fixture()
def db(tmp_path):
    path = tmp_path / "t.db"
    conn = sqlite3.connect(path)
    conn.executescript(
        """
        CREATE TABLE t(a INT, b REAL, c TEXT);
        INSERT INTO t VALUES (1, 1.5, 'x'), (2, 2.25, 'y'), (2, 2.25, 'y');
        """
    )
    conn.commit()
    conn.close()
    return path


# --- execute --------------------------------------------------------------


def test_execute_ok(db):
    result = execute("SELECT a, b FROM t ORDER BY a", db)
    assert result.status == "ok"
    assert result.rows == ((1, 1.5), (2, 2.25), (2, 2.25))
    assert result.error_text is None
    assert result.elapsed_ms >= 0.0


def test_execute_syntax_error(db):
    result = execute("SELEC broken", db)
    assert result.status == "sql_error"
    assert result.rows is None
    assert "syntax" in result.error_text.lower()


def test_execute_missing_table(db):
    assert execute("SELECT * FROM ghost", db).status == "sql_error"


@pytest.mark.parametrize(
    "sql",
    [
        "INSERT INTO t VALUES (9, 9.0, 'z')",
        "UPDATE t SET a = 0",
        "DELETE FROM t",
        "DROP TABLE t",
        "CREATE TABLE evil(x INT)",
        "CREATE INDEX idx ON t(a)",
        "ATTACH DATABASE ':memory:' AS other",
        "PRAGMA journal_mode = DELETE",
    ],
)
def test_execute_denies_writes(db, sql):
    result = execute(sql, db)
    assert result.status == "sql_error"


def test_db_bytes_unchanged_by_execution(db):
    before = hashlib.sha256(db.read_bytes()).hexdigest()
    for sql in (
        "SELECT * FROM t",
        "INSERT INTO t VALUES (5, 5.0, 'w')",
        "DROP TABLE t",
        "SELEC nonsense",
    ):
        execute(sql, db)
    assert hashlib.sha256(db.read_bytes()).hexdigest() == before


def test_execute_timeout_flagged(db):
    slow = (
        "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) "
        "SELECT count(*) FROM c"
    )
    result = execute(slow, db, timeout_ms=500)
    assert result.status == "timeout"
    assert result.rows is None
    # a timeout is not reported as a plain sql error
    assert result.elapsed_ms >= 400.0


def test_execute_float_rounding(db):
    result = execute("SELECT 2.000049, 1.0/3.0", db)
    assert result.rows == ((2.0, 0.3333),)


def test_execute_aggregates_allowed(db):
    result = execute("SELECT count(*), avg(b) FROM t", db)
    assert result.status == "ok"
    assert result.rows == ((3, 2.0),)


def test_execute_recursive_cte_allowed_when_bounded(db):
    sql = (
        "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c WHERE x < 5) "
        "SELECT sum(x) FROM c"
    )
    result = execute(sql, db)
    assert result.status == "ok"
    assert result.rows == ((15,),)


# --- normalization and equivalence ----------------------------------------


def test_normalize_value():
    assert normalize_value(1.23456) == 1.2346
    assert normalize_value(2.0) == 2.0
    assert normalize_value(7) == 7
    assert normalize_value("x") == "x"
    assert normalize_value(None) is None


def test_normalize_rows():
    assert normalize_rows([(1.00004,), ("a",)]) == ((1.0,), ("a",))


def ok(*rows):
    return ExecutionOutcome(status="ok", rows=tuple(rows), error_text=None, elapsed_ms=0.0)


def err():
    return ExecutionOutcome(status="sql_error", rows=None, error_text="boom", elapsed_ms=0.0)


def test_equivalent_multiset_semantics():
    assert equivalent(ok((1,), (2,)), ok((2,), (1,)))
    # multiplicity matters
    assert not equivalent(ok((1,), (1,)), ok((1,)))


def test_equivalent_column_order_matters():
    assert not equivalent(ok((1, 2)), ok((2, 1)))


def test_equivalent_type_distinctions():
    assert not equivalent(ok((None,)), ok((0,)))
    assert not equivalent(ok((None,)), ok(("",)))
    assert not equivalent(ok((0,)), ok(("",)))
    # sqlite integer/float compare equal by value, as in its own = operator
    assert equivalent(ok((0,)), ok((0.0,)))


def test_equivalent_errors_match_nothing():
    assert not equivalent(err(), err())
    assert not equivalent(err(), ok())
    assert not equivalent(ok(), err())
    assert equivalent(ok(), ok())


def test_equivalent_via_execution(db):
    a = execute("SELECT a FROM t ORDER BY a", db)
    b = execute("SELECT a FROM t ORDER BY a DESC", db)
    assert equivalent(a, b)
    c = execute("SELECT b FROM t", db)
    assert not equivalent(a, c)


# --- time anchor ----------------------------------------------------------


def test_substitute_time_anchor():
    anchor = "'2100-12-31 23:59:00'"
    assert (
        substitute_time_anchor("SELECT * FROM t WHERE x < current_time", anchor)
        == "SELECT * FROM t WHERE x < '2100-12-31 23:59:00'"
    )
    assert (
        substitute_time_anchor("SELECT CURRENT_TIME", anchor)
        == "SELECT '2100-12-31 23:59:00'"
    )
    # word boundaries: column names containing the word survive
    assert (
        substitute_time_anchor("SELECT current_timestamp_col FROM t", anchor)
        == "SELECT current_timestamp_col FROM t"
    )


# --- cache ----------------------------------------------------------------


def test_execution_cache_memoizes(db, monkeypatch):
    cache = ExecutionCache(db, timeout_ms=5000)
    calls = []
    import ehr2sql.sql_exec as mod

    real_execute = mod.execute

    def counting_execute(sql, db_path, timeout_ms=30000):
        calls.append(sql)
        return real_execute(sql, db_path, timeout_ms)

    monkeypatch.setattr(mod, "execute", counting_execute)
    first = cache.run("SELECT a FROM t")
    second = cache.run("SELECT a FROM t")
    assert first is second
    assert len(calls) == 1
    cache.run("SELECT b FROM t")
    assert len(calls) == 2


# --- ground truth comparison ----------------------------------------------


def test_compare_matrix(db):
    sql = "SELECT a FROM t"
    assert compare_to_ground_truth(None, None, db) is Outcome.CORRECT
    assert compare_to_ground_truth(None, sql, db) is Outcome.ABSTAINED
    assert compare_to_ground_truth(sql, None, db) is Outcome.INCORRECT
    assert compare_to_ground_truth(sql, sql, db) is Outcome.CORRECT
    assert (
        compare_to_ground_truth("SELECT b FROM t", sql, db) is Outcome.INCORRECT
    )


def test_compare_prediction_error_is_incorrect(db):
    assert (
        compare_to_ground_truth("SELEC broken", "SELECT a FROM t", db)
        is Outcome.INCORRECT
    )


def test_compare_gold_failure_raises(db):
    with pytest.raises(GroundTruthUnexecutableError):
        compare_to_ground_truth("SELECT a FROM t", "SELEC broken", db)


def test_compare_uses_time_anchor(db):
    # unsubstituted, current_time is a time-of-day string and the filter
    # misses every 'x'/'y' row; anchored far in the future it keeps them
    predicted = "SELECT c FROM t WHERE c < current_time"
    gold = "SELECT c FROM t"
    outcome = compare_to_ground_truth(
        predicted, gold, db, time_anchor="'zzzz'"
    )
    assert outcome is Outcome.CORRECT


def test_compare_shares_cache(db):
    cache = ExecutionCache(db, timeout_ms=5000)
    compare_to_ground_truth("SELECT a FROM t", "SELECT a FROM t", db, cache=cache)
    baseline = len(cache._memo)
    compare_to_ground_truth("SELECT a FROM t", "SELECT a FROM t", db, cache=cache)
    assert len(cache._memo) == baseline
