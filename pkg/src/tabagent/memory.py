"""Dual-polarity memory of past plans, keyed by query embeddings."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Optional, Protocol, Sequence

import numpy as np

from .plans import ActionSequence, RuleTable, abstract_plan, decode_sequence, encode_sequence
from .table import TaskKind, is_correct

NORM_TOLERANCE = 1e-6


class BankError(Exception):
    """Raised for build, persistence and compatibility failures of a bank."""


class Polarity(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class EmbeddingProvider(Protocol):
    id: str
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Feature-hashed character n-grams, L2-normalized.

    Deterministic across processes (blake2b, not ``hash``); stands in for a
    neural sentence encoder in tests and offline runs.
    """

    def __init__(self, dimension: int = 256, ngram: int = 3):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.ngram = ngram
        self.id = f"hash-ngram{ngram}-d{dimension}"

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension)
        padded = f" {' '.join(text.lower().split())} "
        for i in range(max(1, len(padded) - self.ngram + 1)):
            gram = padded[i:i + self.ngram].encode("utf-8")
            h = int.from_bytes(hashlib.blake2b(gram, digest_size=8).digest(), "little")
            vec[h % self.dimension] += 1.0 if (h >> 63) & 1 else -1.0
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec[0] = 1.0
            return vec
        return vec / norm


@dataclass(frozen=True)
class MemoryEntry:
    query_text: str
    plan_text: str
    embedding: tuple[float, ...]
    action_seq: ActionSequence
    polarity: Polarity

    def __post_init__(self):
        object.__setattr__(self, "embedding", tuple(float(x) for x in self.embedding))
        object.__setattr__(self, "polarity", Polarity(self.polarity))
        norm = math.sqrt(math.fsum(x * x for x in self.embedding))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"embedding norm {norm:.9f} is not 1")


@dataclass(frozen=True)
class MemoryBank:
    dimension: int
    provider_id: str
    entries: tuple[MemoryEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        for e in self.entries:
            if len(e.embedding) != self.dimension:
                raise ValueError(f"entry dimension {len(e.embedding)} != bank dimension {self.dimension}")

    def __len__(self):
        return len(self.entries)

    @property
    def positives(self) -> list[MemoryEntry]:
        return [e for e in self.entries if e.polarity is Polarity.POSITIVE]

    @property
    def negatives(self) -> list[MemoryEntry]:
        return [e for e in self.entries if e.polarity is Polarity.NEGATIVE]

    @property
    def degenerate(self) -> bool:
        """True unless both polarities are represented."""
        return not (self.positives and self.negatives)

    @cached_property
    def _matrix(self) -> np.ndarray:
        return np.array([e.embedding for e in self.entries], dtype=float).reshape(len(self.entries), self.dimension)


@dataclass(frozen=True)
class MemoryRecord:
    """One historical attempt: the raw material for a memory entry."""

    query_id: str
    query: str
    plan: str
    answer: Optional[str]
    executable: bool
    gold: str
    kind: TaskKind = TaskKind.TABLE_QA


@dataclass
class BuildStats:
    positive: int = 0
    negative: int = 0
    discarded: int = 0


def classify(record: MemoryRecord) -> Optional[Polarity]:
    if record.answer is not None and is_correct(record.answer, record.gold, record.kind):
        return Polarity.POSITIVE
    if record.executable:
        return Polarity.NEGATIVE
    return None


def build_memory(records: Sequence[MemoryRecord], provider: EmbeddingProvider,
                 rules: RuleTable | None = None, stats: BuildStats | None = None) -> MemoryBank:
    if not records:
        raise BankError("empty memory: no records to build from")
    stats = stats if stats is not None else BuildStats()
    entries = []
    for rec in records:
        polarity = classify(rec)
        if polarity is None:
            stats.discarded += 1
            continue
        try:
            vec = np.asarray(provider.embed(rec.query), dtype=float)
        except Exception as exc:
            raise BankError(f"embedding failed for query {rec.query_id!r}: {exc}") from exc
        if vec.shape != (provider.dimension,):
            raise BankError(f"provider returned shape {vec.shape} for query {rec.query_id!r}")
        entries.append(MemoryEntry(rec.query, rec.plan, tuple(vec), abstract_plan(rec.plan, rules), polarity))
        if polarity is Polarity.POSITIVE:
            stats.positive += 1
        else:
            stats.negative += 1
    return MemoryBank(provider.dimension, provider.id, tuple(entries))


def retrieve(bank: MemoryBank, query_vec, k: int) -> tuple[list[ActionSequence], list[ActionSequence]]:
    """Top-``k`` entries by cosine similarity, split into (positive, negative) sequences.

    Ties keep insertion order. Either list may come back empty.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not bank.entries:
        return [], []
    q = np.asarray(query_vec, dtype=float)
    if q.shape != (bank.dimension,):
        raise BankError(f"query dimension {q.shape} != bank dimension {bank.dimension}")
    scores = bank._matrix @ q
    order = np.argsort(-scores, kind="stable")[:k]
    pos, neg = [], []
    for idx in order:
        e = bank.entries[int(idx)]
        (pos if e.polarity is Polarity.POSITIVE else neg).append(e.action_seq)
    return pos, neg


# --- persistence ---------------------------------------------------------

def save_bank(bank: MemoryBank, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {"dimension": bank.dimension, "provider_id": bank.provider_id, "count": len(bank.entries)}
        fh.write(json.dumps(header) + "\n")
        for e in bank.entries:
            rec = {
                "query": e.query_text,
                "plan": e.plan_text,
                "embedding": list(e.embedding),
                "action_seq": encode_sequence(e.action_seq),
                "polarity": e.polarity.value,
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_bank(path, provider_id: str | None = None, dimension: int | None = None) -> MemoryBank:
    with open(path, "rb") as fh:
        data = fh.read()
    records = []
    offset = 0
    for raw in data.splitlines(keepends=True):
        if raw.strip():
            try:
                records.append((offset, json.loads(raw)))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                pos = getattr(exc, "pos", getattr(exc, "start", 0))
                raise BankError(f"{path}: parse error at byte offset {offset + pos}: {exc}") from exc
        offset += len(raw)
    if not records:
        raise BankError(f"{path}: missing header at byte offset 0")
    _, header = records[0]
    try:
        dim, pid, count = int(header["dimension"]), str(header["provider_id"]), int(header["count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise BankError(f"{path}: bad header at byte offset 0: {exc}") from exc
    if dimension is not None and dim != dimension:
        raise BankError(f"{path}: bank dimension {dim} != expected {dimension}")
    if provider_id is not None and pid != provider_id:
        raise BankError(f"{path}: bank provider {pid!r} != expected {provider_id!r}")
    body = records[1:]
    if len(body) != count:
        raise BankError(f"{path}: truncated at byte offset {len(data)}: header declares {count} entries, found {len(body)}")
    entries = []
    for off, rec in body:
        try:
            entry = MemoryEntry(rec["query"], rec["plan"], tuple(rec["embedding"]),
                                decode_sequence(rec["action_seq"]), Polarity(rec["polarity"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise BankError(f"{path}: bad entry at byte offset {off}: {exc}") from exc
        if len(entry.embedding) != dim:
            raise BankError(f"{path}: entry at byte offset {off} has dimension {len(entry.embedding)}, bank declares {dim}")
        entries.append(entry)
    return MemoryBank(dim, pid, tuple(entries))
