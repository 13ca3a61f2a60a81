"""Token confidence restricted to identifiers and literals.

Boilerplate such as keywords, operators and whitespace is generated with
near-certainty and would inflate a plain average; only tokens that overlap an
identifier, number or string lexeme are counted.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

# smallest positive double; keeps the score strictly positive on underflow
_MIN_CONFIDENCE = math.ulp(0.0)

# keywords of the usual sandbox languages; all are treated as syntax
KEYWORDS = frozenset("""
False None True and as assert async await break class continue def del elif else
except finally for from global if import in is lambda nonlocal not or pass raise
return try while with yield match case
const let var function new typeof instanceof null undefined this void
""".split())

_LEXEME = re.compile(
    r"""
    (?P<string>[rRbBfFuU]{0,2}(?:\"\"\"[\s\S]*?\"\"\"|'''[\s\S]*?'''|"(?:\\.|[^"\\\n])*"|'(?:\\.|[^'\\\n])*'))
  | (?P<number>0[xX][0-9a-fA-F_]+|0[oObB][0-7_]+|(?:\d[\d_]*\.?[\d_]*|\.\d[\d_]*)(?:[eE][+-]?\d+)?[jJ]?)
  | (?P<ident>[^\W\d]\w*)
  | (?P<space>\s+)
  | (?P<other>.)
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class TokenRecord:
    text: str
    logprob: float
    start: int  # byte offsets into the generated text, end exclusive
    end: int

    def __post_init__(self):
        if math.isnan(self.logprob) or self.logprob > 0.0:
            raise ValueError(f"logprob must be <= 0, got {self.logprob}")
        if not 0 <= self.start <= self.end:
            raise ValueError(f"bad span [{self.start}, {self.end})")


@dataclass(frozen=True)
class Lexeme:
    kind: str  # "identifier" | "number" | "string" | "keyword" | "other"
    text: str
    start: int
    end: int

    @property
    def significant(self) -> bool:
        return self.kind in ("identifier", "number", "string")


@dataclass(frozen=True)
class ConfidenceReport:
    confidence: float
    mask: frozenset[int]
    used_fallback: bool = False


def lex(code: str) -> list[Lexeme]:
    """Split ``code`` into lexemes with byte offsets; whitespace is dropped."""
    out = []
    byte_pos = 0
    for m in _LEXEME.finditer(code):
        text = m.group()
        width = len(text.encode("utf-8"))
        kind = m.lastgroup
        if kind != "space":
            if kind == "ident":
                kind = "keyword" if text in KEYWORDS else "identifier"
            out.append(Lexeme(kind, text, byte_pos, byte_pos + width))
        byte_pos += width
    return out


def check_spans(tokens: Sequence[TokenRecord]) -> None:
    last_end = 0
    for i, t in enumerate(tokens):
        if t.start < last_end:
            raise ValueError(f"token {i} span [{t.start}, {t.end}) overlaps or precedes token {i - 1}")
        last_end = t.end


def identify_significant(code: str, tokens: Sequence[TokenRecord]) -> frozenset[int]:
    check_spans(tokens)
    spans = [(lx.start, lx.end) for lx in lex(code) if lx.significant]
    mask = set()
    j = 0
    for i, tok in enumerate(tokens):
        # both lists are sorted by start; skip lexemes that end before this token
        while j < len(spans) and spans[j][1] <= tok.start:
            j += 1
        if j < len(spans) and spans[j][0] < tok.end and tok.end > tok.start:
            mask.add(i)
    return frozenset(mask)


def compute_confidence(tokens: Sequence[TokenRecord], mask: Iterable[int]) -> ConfidenceReport:
    if not tokens:
        raise ValueError("cannot score an empty token list")
    mask = frozenset(mask)
    bad = [i for i in mask if not 0 <= i < len(tokens)]
    if bad:
        raise ValueError(f"mask indices out of range: {sorted(bad)}")
    fallback = not mask
    chosen = sorted(mask) if mask else range(len(tokens))
    mean = math.fsum(tokens[i].logprob for i in chosen) / len(chosen)
    return ConfidenceReport(max(math.exp(mean), _MIN_CONFIDENCE), mask, fallback)


def should_refine(report: ConfidenceReport, threshold: float) -> bool:
    return report.confidence < threshold


def code_confidence(code: str, tokens: Sequence[TokenRecord]) -> ConfidenceReport:
    return compute_confidence(tokens, identify_significant(code, tokens))


def low_confidence_lexemes(code: str, tokens: Sequence[TokenRecord], mask: Iterable[int],
                           limit: int = 5) -> list[str]:
    """Source text of the least likely significant tokens, most doubtful first."""
    raw = code.encode("utf-8")
    ranked = sorted(mask, key=lambda i: (tokens[i].logprob, i))
    seen, out = set(), []
    for i in ranked:
        text = raw[tokens[i].start:tokens[i].end].decode("utf-8", "replace").strip()
        if text and text not in seen:
            seen.add(text)
            out.append(text)
        if len(out) == limit:
            break
    return out
