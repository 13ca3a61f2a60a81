"""Keyword parser that turns free-form plan text into action primitives.

Only the logical shape of a plan survives: column names, numbers and quoted
literals are never matched, so two plans that differ only in their
arguments abstract to the same sequence.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import IntEnum
from importlib import resources
from typing import Iterable, Sequence

MAX_SEQUENCE_LENGTH = 64


class ActionPrimitive(IntEnum):
    # codes are persisted in memory bank files; append only
    FILTER = 0
    SELECT = 1
    GROUP = 2
    AGGREGATE = 3
    SORT = 4
    ARITHMETIC = 5
    COMPARE = 6
    CONVERT = 7
    LOOKUP = 8
    ANSWER = 9


ActionSequence = tuple[ActionPrimitive, ...]

_QUOTED = re.compile(r"\"[^\"]*\"|'[^']*'|`[^`]*`|“[^”]*”|‘[^’]*’")
_TOKEN = re.compile(r"\d+(?:[.,]\d+)*|[^\W\d]\w*")


def _words(text: str) -> list[str]:
    # quoted spans are replaced by a placeholder token so they still break adjacency
    text = _QUOTED.sub(" 0 ", text.lower())
    return _TOKEN.findall(text)


@dataclass(frozen=True)
class Rule:
    trigger: str
    primitive: ActionPrimitive

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(self.trigger.split())


class RuleTable:
    """Ordered trigger rules; longest phrase wins, then the earlier rule."""

    def __init__(self, rules: Iterable[Rule]):
        self.rules = tuple(rules)
        by_first: dict[str, list[tuple[tuple[str, ...], int, ActionPrimitive]]] = {}
        for order, rule in enumerate(self.rules):
            if rule.trigger != rule.trigger.lower() or not rule.trigger.strip():
                raise ValueError(f"trigger must be non-empty lowercase: {rule.trigger!r}")
            words = tuple(_words(rule.trigger))
            if list(words) != rule.trigger.split():
                raise ValueError(f"trigger {rule.trigger!r} contains digits or punctuation")
            by_first.setdefault(words[0], []).append((words, order, rule.primitive))
        for entries in by_first.values():
            entries.sort(key=lambda e: (-len(e[0]), e[1]))
        self._index = by_first

    def __len__(self):
        return len(self.rules)

    def match_at(self, words: Sequence[str], i: int):
        """Return (primitive, length) of the winning rule at word ``i``, or None."""
        for phrase, _, prim in self._index.get(words[i], ()):
            if tuple(words[i:i + len(phrase)]) == phrase:
                return prim, len(phrase)
        return None

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "RuleTable":
        rules = []
        for rec in records:
            name = rec["primitive"]
            try:
                prim = ActionPrimitive[name]
            except KeyError:
                raise ValueError(f"unknown primitive {name!r} for trigger {rec.get('trigger')!r}") from None
            rules.append(Rule(rec["trigger"], prim))
        return cls(rules)

    @classmethod
    def load(cls, path) -> "RuleTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_records(json.loads(line) for line in fh if line.strip())

    @classmethod
    def default(cls) -> "RuleTable":
        text = resources.files("tabagent").joinpath("data/rules.jsonl").read_text(encoding="utf-8")
        return cls.from_records(json.loads(line) for line in text.splitlines() if line.strip())


_DEFAULT_RULES: RuleTable | None = None


def default_rules() -> RuleTable:
    global _DEFAULT_RULES
    if _DEFAULT_RULES is None:
        _DEFAULT_RULES = RuleTable.default()
    return _DEFAULT_RULES


def abstract_plan(plan_text: str, rules: RuleTable | None = None) -> ActionSequence:
    rules = rules or default_rules()
    words = _words(plan_text)
    out: list[ActionPrimitive] = []
    i = 0
    while i < len(words):
        hit = rules.match_at(words, i)
        if hit is None:
            i += 1
            continue
        prim, length = hit
        if not out or out[-1] is not prim:
            out.append(prim)
        i += length
    return tuple(out[:MAX_SEQUENCE_LENGTH])


def encode_sequence(seq: Sequence[ActionPrimitive]) -> list[int]:
    return [int(p) for p in seq]


def decode_sequence(codes: Iterable[int]) -> ActionSequence:
    return tuple(ActionPrimitive(c) for c in codes)


def format_sequence(seq: Sequence[ActionPrimitive]) -> str:
    return " > ".join(p.name for p in seq) or "(empty)"
