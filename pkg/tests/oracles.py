"""Slow, obviously-correct reference implementations used by the tests.

None of these import from the package, so they cannot share its bugs.
"""

from __future__ import annotations

import math
import statistics
from functools import lru_cache


def levenshtein(a, b) -> int:
    """Textbook recursion with memoization."""
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def advantages(rewards, logps, alpha, mode="any", floor=1e-8):
    """Group-normalized advantages with the misalignment boost, written out longhand."""
    g = len(rewards)
    mean = sum(rewards) / g
    std = statistics.pstdev(rewards)
    if std < floor:
        return [0.0] * g
    flagged = set()
    for w in range(g):
        for l in range(g):
            if rewards[w] > rewards[l] and logps[w] < logps[l]:
                if mode in ("any", "winner"):
                    flagged.add(w)
                if mode in ("any", "loser"):
                    flagged.add(l)
    return [(1 + alpha if i in flagged else 1.0) * (rewards[i] - mean) / std for i in range(g)]


def clipped_objective(new, old, adv, eps_low, eps_high):
    """Token-mean clipped surrogate over a group; ``new``/``old`` are per-trajectory token lists."""
    total, count = 0.0, 0
    for lp_new, lp_old, a in zip(new, old, adv):
        for n, o in zip(lp_new, lp_old):
            r = math.exp(n - o)
            clipped = min(max(r, 1 - eps_low), 1 + eps_high)
            total += min(r * a, clipped * a)
            count += 1
    return total / count


def weighted_vote(keys, weights):
    """Argmax of summed weight per key; ties go to the smallest key."""
    totals = {}
    for k, w in zip(keys, weights):
        totals[k] = totals.get(k, 0.0) + w
    best = sorted(totals, key=lambda k: (-totals[k], k))[0]
    return best, totals[best] / sum(weights), totals


def masked_confidence(logprobs, mask):
    """exp of the mean logprob over masked positions, or over all when the mask is empty."""
    idx = sorted(mask) or list(range(len(logprobs)))
    return math.exp(sum(logprobs[i] for i in idx) / len(idx))


def sigmoid(x):
    return 1 / (1 + math.exp(-x))
