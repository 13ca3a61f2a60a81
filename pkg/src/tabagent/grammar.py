"""Trajectory grammar.

A step is free thought text followed by exactly one of

    ```action            <answer>...</answer>
    <code>
    ```

Fence lines must match exactly. Transcripts chain steps; an action may be
followed by an ``<observation>...</observation>`` block written by the
environment, and an answer ends the transcript.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

ACTION_OPEN = "```action"
FENCE = "```"
ANSWER_OPEN = "<answer>"
ANSWER_CLOSE = "</answer>"
OBS_OPEN = "<observation>"
OBS_CLOSE = "</observation>"

_RESERVED = (FENCE, ANSWER_OPEN, ANSWER_CLOSE, OBS_OPEN, OBS_CLOSE)


class GrammarError(ValueError):
    pass


@dataclass(frozen=True)
class ParsedStep:
    thought: str
    code: Optional[str] = None
    answer: Optional[str] = None
    observation: Optional[str] = None
    code_start: int = -1  # character offset of the code inside the parsed text
    code_end: int = -1


def _find_line(text: str, line: str, start: int) -> int:
    """Offset of the next line equal to ``line`` at or after ``start``, or -1."""
    pos = start
    while True:
        pos = text.find(line, pos)
        if pos < 0:
            return -1
        at_bol = pos == 0 or text[pos - 1] == "\n"
        tail = pos + len(line)
        at_eol = tail == len(text) or text[tail] == "\n"
        if at_bol and at_eol:
            return pos
        pos += 1


def _next_fence_line(text: str, start: int) -> int:
    pos = start
    while True:
        pos = text.find(FENCE, pos)
        if pos < 0 or pos == 0 or text[pos - 1] == "\n":
            return pos
        pos += 1


def _parse_one(text: str, pos: int) -> tuple[ParsedStep, int]:
    act = _find_line(text, ACTION_OPEN, pos)
    ans = text.find(ANSWER_OPEN, pos)
    cands = [p for p in (act, ans) if p >= 0]
    if not cands:
        raise GrammarError(f"no action or answer block after offset {pos}")
    head = min(cands)
    thought = text[pos:head]
    if not thought.strip():
        raise GrammarError(f"empty thought before offset {head}")
    for token in _RESERVED:
        if token in thought:
            raise GrammarError(f"stray {token!r} in thought text")
    if head == act:
        code_start = act + len(ACTION_OPEN) + 1
        close = _next_fence_line(text, min(code_start, len(text)))
        if close < 0 or code_start > len(text):
            raise GrammarError("unterminated action block")
        if _find_line(text, FENCE, close) != close:
            raise GrammarError(f"malformed fence line at offset {close}")
        code = text[code_start:close]
        if not code.strip():
            raise GrammarError("empty action block")
        end = close + len(FENCE)
        step = ParsedStep(thought.strip(), code=code.rstrip("\n"), code_start=code_start,
                          code_end=code_start + len(code.rstrip("\n")))
        return step, end
    close = text.find(ANSWER_CLOSE, ans)
    if close < 0:
        raise GrammarError("unterminated answer block")
    body = text[ans + len(ANSWER_OPEN):close]
    if ANSWER_OPEN in body or not body.strip():
        raise GrammarError("empty or nested answer block")
    return ParsedStep(thought.strip(), answer=body.strip()), close + len(ANSWER_CLOSE)


def parse_step(text: str) -> ParsedStep:
    """Parse a single model response; nothing but whitespace may follow the block."""
    step, end = _parse_one(text, 0)
    if text[end:].strip():
        raise GrammarError(f"stray text after offset {end}")
    return step


def parse_transcript(text: str) -> list[ParsedStep]:
    steps = []
    pos = 0
    while True:
        step, pos = _parse_one(text, pos)
        if step.code is not None:
            rest = text[pos:]
            lead = len(rest) - len(rest.lstrip())
            if rest.lstrip().startswith(OBS_OPEN):
                o_start = pos + lead + len(OBS_OPEN)
                o_end = text.find(OBS_CLOSE, o_start)
                if o_end < 0:
                    raise GrammarError("unterminated observation block")
                step = ParsedStep(step.thought, step.code, None, text[o_start:o_end].strip("\n"),
                                  step.code_start, step.code_end)
                pos = o_end + len(OBS_CLOSE)
        steps.append(step)
        if not text[pos:].strip():
            return steps
        if step.answer is not None:
            raise GrammarError(f"text after final answer at offset {pos}")


def is_well_formed(text: str) -> bool:
    try:
        parse_transcript(text)
    except GrammarError:
        return False
    return True


def format_action(thought: str, code: str) -> str:
    return f"{thought}\n{ACTION_OPEN}\n{code}\n{FENCE}"


def format_answer(thought: str, answer: str) -> str:
    return f"{thought}\n{ANSWER_OPEN}{answer}{ANSWER_CLOSE}"


def format_observation(text: str) -> str:
    return f"{OBS_OPEN}\n{text.replace(OBS_CLOSE, '</ observation>')}\n{OBS_CLOSE}"
