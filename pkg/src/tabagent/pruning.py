"""Contrastive edit-distance scoring and top-fraction pruning of candidate plans."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .plans import ActionSequence


@dataclass(frozen=True)
class PruningConfig:
    retention_ratio: float = 0.5
    d_cap: int = 16

    def __post_init__(self):
        if not 0.0 < self.retention_ratio <= 1.0:
            raise ValueError(f"retention_ratio must be in (0, 1], got {self.retention_ratio}")
        if self.d_cap < 1:
            raise ValueError(f"d_cap must be >= 1, got {self.d_cap}")


@dataclass(frozen=True)
class CandidatePlan:
    plan_text: str
    action_seq: ActionSequence
    sample_index: int
    d_pos: Optional[int] = None
    d_neg: Optional[int] = None
    s_con: Optional[float] = None

    @property
    def scored(self) -> bool:
        return self.s_con is not None


def _lev_dp(a, n, b, m, row):
    # two-row Wagner-Fischer; row is scratch of length >= m + 1
    for j in range(m + 1):
        row[j] = j
    for i in range(1, n + 1):
        diag = row[0]
        row[0] = i
        for j in range(1, m + 1):
            up = row[j]
            best = diag if a[i - 1] == b[j - 1] else diag + 1
            if up + 1 < best:
                best = up + 1
            if row[j - 1] + 1 < best:
                best = row[j - 1] + 1
            row[j] = best
            diag = up
    return row[m]


def _match_masks(b, m, peq):
    # peq[c] has bit j set iff b[j] == c
    peq[:] = 0
    for j in range(m):
        peq[b[j]] |= np.uint64(1) << np.uint64(j)


def _lev_bits(a, n, peq, m):
    # bit-vector Levenshtein (Myers 1999, Hyyro 2001) for 1 <= m <= 64
    one = np.uint64(1)
    top = one << np.uint64(m - 1)
    pv = ~np.uint64(0)
    mv = np.uint64(0)
    score = m
    for i in range(n):
        eq = peq[a[i]]
        xv = eq | mv
        xh = (((eq & pv) + pv) ^ pv) | eq
        ph = mv | ~(xh | pv)
        mh = pv & xh
        if ph & top:
            score += 1
        elif mh & top:
            score -= 1
        ph = (ph << one) | one
        mh = mh << one
        pv = mh | ~(xv | ph)
        mv = ph & xv
    return score


def _lev(a, n, b, m, peq, row):
    if m == 0:
        return n
    if m <= 64:
        _match_masks(b, m, peq)
        return _lev_bits(a, n, peq, m)
    return _lev_dp(a, n, b, m, row)


def _lev_cross(codes_a, len_a, codes_b, len_b, n_symbols, out):
    # out[j, i] = distance(a_i, b_j); masks for b_j are built once per row
    peq = np.zeros(n_symbols, dtype=np.uint64)
    row = np.empty(codes_b.shape[1] + 1, dtype=np.int64)
    for j in range(codes_b.shape[0]):
        m = len_b[j]
        b = codes_b[j]
        if 0 < m <= 64:
            _match_masks(b, m, peq)
            for i in range(codes_a.shape[0]):
                out[j, i] = _lev_bits(codes_a[i], len_a[i], peq, m)
        else:
            for i in range(codes_a.shape[0]):
                out[j, i] = _lev(codes_a[i], len_a[i], b, m, peq, row)


try:
    from numba import njit
except ImportError:  # pragma: no cover - pure Python fallback, same code
    pass
else:
    _jit = njit(cache=True, nogil=True)
    _lev_dp, _match_masks, _lev_bits = _jit(_lev_dp), _jit(_match_masks), _jit(_lev_bits)
    _lev, _lev_cross = _jit(_lev), _jit(_lev_cross)


def _codes(a: Sequence, b: Sequence) -> tuple[np.ndarray, np.ndarray, int]:
    table: dict = {}
    ca = np.array([table.setdefault(x, len(table)) for x in a], dtype=np.int64)
    cb = np.array([table.setdefault(x, len(table)) for x in b], dtype=np.int64)
    return ca, cb, max(len(table), 1)


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Unit-cost Levenshtein distance between two sequences of hashable items."""
    ca, cb, n_symbols = _codes(a, b)
    if len(ca) < len(cb):
        ca, cb = cb, ca  # bit-vector path wants the shorter side as the pattern
    peq = np.zeros(n_symbols, dtype=np.uint64)
    return int(_lev(ca, len(ca), cb, len(cb), peq, np.empty(len(cb) + 1, dtype=np.int64)))


def edit_distance_matrix(codes_a, len_a, codes_b, len_b) -> np.ndarray:
    """All-pairs distances between two batches of non-negative integer codes, right-padded.

    Returns ``D`` with ``D[i, j] = edit_distance(a_i, b_j)``.
    """
    codes_a = np.ascontiguousarray(codes_a, dtype=np.int64)
    codes_b = np.ascontiguousarray(codes_b, dtype=np.int64)
    n_symbols = int(max(codes_a.max(initial=0), codes_b.max(initial=0))) + 1
    out = np.empty((codes_b.shape[0], codes_a.shape[0]), dtype=np.int16)
    _lev_cross(codes_a, np.asarray(len_a, dtype=np.int64), codes_b, np.asarray(len_b, dtype=np.int64),
               n_symbols, out)
    return out.T


def nearest_distance(seq: ActionSequence, prototypes: Sequence[ActionSequence], cap: int) -> int:
    if not prototypes:
        return cap
    return min(edit_distance(seq, p) for p in prototypes)


def contrastive_score(cand: CandidatePlan, s_pos: Sequence[ActionSequence],
                      s_neg: Sequence[ActionSequence], cfg: PruningConfig = PruningConfig()) -> CandidatePlan:
    d_pos = nearest_distance(cand.action_seq, s_pos, cfg.d_cap)
    d_neg = nearest_distance(cand.action_seq, s_neg, cfg.d_cap)
    return replace(cand, d_pos=d_pos, d_neg=d_neg, s_con=float(d_neg - d_pos))


def retained_count(n: int, ratio: float) -> int:
    # round away float noise before ceil so that e.g. 0.7 * 10 keeps 7, not 8
    return max(1, math.ceil(round(ratio * n, 9)))


def prune(candidates: Sequence[CandidatePlan], cfg: PruningConfig = PruningConfig()) -> list[CandidatePlan]:
    if not candidates:
        raise ValueError("prune needs at least one candidate")
    unscored = [c.sample_index for c in candidates if not c.scored]
    if unscored:
        raise ValueError(f"unscored candidates: sample indices {unscored}")
    ranked = sorted(candidates, key=lambda c: (-c.s_con, c.sample_index))
    return ranked[:retained_count(len(ranked), cfg.retention_ratio)]
