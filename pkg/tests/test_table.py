import json
from decimal import Decimal

import pytest
from hypothesis import given, strategies as st

from tabagent.table import (DatasetError, Table, TaskInstance, TaskKind, is_correct, load_dataset,
                            normalize_answer, save_dataset, serialize_table)


def _task(i, kind=TaskKind.TABLE_QA):
    return TaskInstance(f"t{i}", Table(("a", "b"), (("1", "2"),)), f"q{i}?", "1", kind)


def test_load_dataset_keeps_file_order(tmp_path):
    path = tmp_path / "ds.jsonl"
    save_dataset([_task(2), _task(1)], path)
    assert [t.id for t in load_dataset(path)] == ["t2", "t1"]


def test_load_dataset_reports_arity_error_by_id(tmp_path):
    path = tmp_path / "ds.jsonl"
    rec = {"id": "bad-7", "table": {"columns": ["a", "b"], "rows": [["1", "2", "3"]]},
           "question": "q", "gold_answer": "1", "kind": "table_qa"}
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(DatasetError, match="bad-7"):
        load_dataset(path)


def test_load_dataset_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert load_dataset(path) == []


def test_load_dataset_bad_json_names_line(tmp_path):
    path = tmp_path / "ds.jsonl"
    save_dataset([_task(1)], path)
    with open(path, "a") as fh:
        fh.write("{not json\n")
    with pytest.raises(DatasetError, match=r"ds\.jsonl:2:"):
        load_dataset(path)


def test_table_rejects_duplicate_columns():
    with pytest.raises(ValueError):
        Table(("a", " a"), ())


def test_serialize_small_table():
    t = Table(("a", "b"), (("1", "2"),))
    assert serialize_table(t) == "| a | b |\n| --- | --- |\n| 1 | 2 |"


def test_serialize_zero_rows():
    assert serialize_table(Table(("a", "b"), ())) == "| a | b |\n| --- | --- |"


def test_serialize_truncates_to_cell_budget():
    t = Table(("a", "b"), tuple((str(i), str(i * 2)) for i in range(100)))
    lines = serialize_table(t, max_cells=20).splitlines()
    body = lines[2:-1]
    assert len(body) == 9
    assert body[-1] == "| 8 | 16 |"
    assert lines[-1] == "... (91 rows omitted)"


def test_serialize_escapes_pipes():
    assert "x \\| y" in serialize_table(Table(("c",), (("x | y",),)))


@pytest.mark.parametrize("raw, kind, canonical, numeric", [
    (" Paris ", TaskKind.TABLE_QA, "paris", None),
    ("1,000", TaskKind.TABLE_QA, "1000", Decimal(1000)),
    ("Yes", TaskKind.FACT_VERIFICATION, "true", None),
    ("refuted", TaskKind.FACT_VERIFICATION, "false", None),
    ("'3.50'", TaskKind.TABLE_QA, "3.5", Decimal("3.5")),
])
def test_normalize_examples(raw, kind, canonical, numeric):
    n = normalize_answer(raw, kind)
    assert n.canonical == canonical
    assert n.numeric == numeric


def test_yes_is_not_a_label_outside_fact_verification():
    assert normalize_answer("Yes").canonical == "yes"


def test_numeric_match_tolerates_float_noise():
    assert is_correct("14.000000001", "14")
    assert not is_correct("14.1", "14")


@given(st.text(max_size=40), st.sampled_from(list(TaskKind)))
def test_normalize_is_idempotent(raw, kind):
    once = normalize_answer(raw, kind)
    assert normalize_answer(once.canonical, kind) == once


cells = st.text(st.characters(blacklist_categories=("Cs",)), max_size=8)


@given(st.integers(1, 4).flatmap(lambda w: st.tuples(
    st.lists(st.from_regex(r"[a-z]{1,6}", fullmatch=True), min_size=w, max_size=w, unique=True),
    st.lists(st.lists(cells, min_size=w, max_size=w), max_size=6))))
def test_dataset_round_trip(tmp_path_factory, shape):
    cols, rows = shape
    t = TaskInstance("x", Table(tuple(cols), tuple(map(tuple, rows))), "q", "g", TaskKind.MATH_WORD)
    path = tmp_path_factory.mktemp("rt") / "ds.jsonl"
    save_dataset([t], path)
    assert load_dataset(path) == [t]
