"""Tables, task instances, dataset I/O and answer normalization."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from enum import Enum
from typing import Iterable, Optional

NUMERIC_TOLERANCE = 1e-6
DEFAULT_MAX_CELLS = 4096


class DatasetError(ValueError):
    pass


class TaskKind(str, Enum):
    TABLE_QA = "table_qa"
    FACT_VERIFICATION = "fact_verification"
    MATH_WORD = "math_word"


@dataclass(frozen=True)
class Table:
    columns: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        trimmed = [c.strip() for c in self.columns]
        if any(not c for c in trimmed):
            raise ValueError("column names must be non-empty")
        if len(set(trimmed)) != len(trimmed):
            raise ValueError(f"duplicate column names: {list(self.columns)}")
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(f"row {i} has {len(row)} cells, expected {width}")

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "rows": [list(r) for r in self.rows]}


@dataclass(frozen=True)
class TaskInstance:
    id: str
    table: Table
    question: str
    gold_answer: str
    kind: TaskKind = TaskKind.TABLE_QA

    def __post_init__(self):
        if not self.id:
            raise ValueError("task id must be non-empty")
        if not self.gold_answer:
            raise ValueError(f"task {self.id}: gold answer must be non-empty")
        object.__setattr__(self, "kind", TaskKind(self.kind))

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "table": self.table.to_dict(),
            "question": self.question,
            "answer": self.gold_answer,
            "kind": self.kind.value,
        }


@dataclass(frozen=True)
class NormalizedAnswer:
    canonical: str
    numeric: Optional[Decimal] = None


# --- dataset I/O ---------------------------------------------------------

def task_from_record(rec: dict) -> TaskInstance:
    task_id = rec.get("id", "")
    try:
        table = Table(tuple(rec["table"]["columns"]), tuple(tuple(r) for r in rec["table"]["rows"]))
    except ValueError as exc:
        raise DatasetError(f"record {task_id!r}: {exc}") from exc
    return TaskInstance(
        id=task_id,
        table=table,
        question=rec["question"],
        gold_answer=rec["answer"],
        kind=TaskKind(rec.get("kind", "table_qa")),
    )


def load_dataset(path) -> list[TaskInstance]:
    tasks = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise ValueError("record is not an object")
                task = task_from_record(rec)
            except DatasetError:
                raise
            except (ValueError, KeyError, TypeError) as exc:
                raise DatasetError(f"{path}:{lineno}: malformed record ({exc})") from exc
            tasks.append(task)
    return tasks


def save_dataset(tasks: Iterable[TaskInstance], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in tasks:
            fh.write(json.dumps(t.to_record(), ensure_ascii=False) + "\n")


# --- serialization -------------------------------------------------------

def _cell(text: str) -> str:
    return " ".join(text.split()).replace("|", "\\|")


def _line(cells) -> str:
    return "| " + " | ".join(_cell(c) for c in cells) + " |"


def serialize_table(table: Table, max_cells: int = DEFAULT_MAX_CELLS) -> str:
    """Render ``table`` as a pipe grid, keeping only the top rows that fit.

    The header counts toward ``max_cells``; dropped rows are reported on a
    trailing ``... (R rows omitted)`` line.
    """
    width = len(table.columns)
    if max_cells < width:
        raise ValueError(f"max_cells={max_cells} cannot hold the {width}-column header")
    allowed = max_cells // width - 1
    shown = table.rows[:allowed]
    lines = [_line(table.columns), "| " + " | ".join("---" for _ in table.columns) + " |"]
    lines.extend(_line(r) for r in shown)
    omitted = len(table.rows) - len(shown)
    if omitted > 0:
        lines.append(f"... ({omitted} rows omitted)")
    return "\n".join(lines)


# --- answer normalization ------------------------------------------------

_QUOTES = "\"'`"
_NUMBER = re.compile(r"[+-]?(?:\d+|\d{1,3}(?:,\d{3})+)(?:\.\d+)?|[+-]?\.\d+")
_TRUE_LABELS = frozenset({"true", "yes", "entailed", "1"})
_FALSE_LABELS = frozenset({"false", "no", "refuted", "0"})


def _clean(raw: str) -> str:
    s = raw
    while True:
        t = " ".join(s.split()).lower()
        if len(t) >= 2 and t[0] == t[-1] and t[0] in _QUOTES:
            t = t[1:-1]
        if t == s:
            return t
        s = t


def _format_decimal(d: Decimal) -> str:
    if d == 0:
        return "0"
    text = format(d.normalize(), "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text


def normalize_answer(raw: str, kind=TaskKind.TABLE_QA) -> NormalizedAnswer:
    s = _clean(raw)
    if TaskKind(kind) is TaskKind.FACT_VERIFICATION:
        if s in _TRUE_LABELS:
            return NormalizedAnswer("true")
        if s in _FALSE_LABELS:
            return NormalizedAnswer("false")
    if _NUMBER.fullmatch(s):
        try:
            value = Decimal(s.replace(",", ""))
        except InvalidOperation:  # pragma: no cover - regex guarantees a parse
            return NormalizedAnswer(s)
        canonical = _format_decimal(value)
        return NormalizedAnswer(canonical, Decimal(canonical))
    return NormalizedAnswer(s)


def answers_match(a: NormalizedAnswer, b: NormalizedAnswer, tol: float = NUMERIC_TOLERANCE) -> bool:
    if a.numeric is not None and b.numeric is not None:
        return abs(a.numeric - b.numeric) <= Decimal(str(tol))
    return a.canonical == b.canonical


def is_correct(pred: str, gold: str, kind=TaskKind.TABLE_QA) -> bool:
    return answers_match(normalize_answer(pred, kind), normalize_answer(gold, kind))
