"""Self-check suites run by ``tabagent verify``.

Each suite compares a production routine with an independent derivation
(exhaustive tables, plain-Python re-derivations, or algebraic properties)
and reports the largest discrepancy seen.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import aggregation, confidence, pruning, rewards, synthetic
from .clients import tokenize


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_error: float = 0.0
    seconds: float = 0.0
    failures: list[str] = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.name:<18} max_error={self.max_error:.3g} ({self.seconds:.2f}s)"
        if self.failures:
            text += "\n" + "\n".join(f"    - {f}" for f in self.failures[:5])
        return text


# --- edit distance -------------------------------------------------------

def all_sequences(alphabet: int, max_len: int) -> list[np.ndarray]:
    """Per length k, a (alphabet**k, k) array of every sequence in base-``alphabet`` order."""
    out = []
    for k in range(max_len + 1):
        n = np.arange(alphabet ** k)
        digits = [(n // alphabet ** (k - 1 - p)) % alphabet for p in range(k)]
        out.append(np.stack(digits, axis=1) if k else np.zeros((1, 0), dtype=np.int64))
    return out


def prefix_table(alphabet: int, max_len: int) -> dict[tuple[int, int], np.ndarray]:
    """Levenshtein for every pair, from the prefix recursion.

    lev(a x, b y) = min(lev(a, b y) + 1, lev(a x, b) + 1, lev(a, b) + [x != y]).
    Sequences of length k are numbered so that drop-last is ``n // alphabet``
    and the last symbol is ``n % alphabet``.
    """
    table: dict[tuple[int, int], np.ndarray] = {}
    sizes = [alphabet ** k for k in range(max_len + 1)]
    for la in range(max_len + 1):
        for lb in range(max_len + 1):
            if la == 0 or lb == 0:
                table[la, lb] = np.full((sizes[la], sizes[lb]), la + lb, dtype=np.int16)
                continue
            drop_a = np.repeat(table[la - 1, lb], alphabet, axis=0)
            drop_b = np.repeat(table[la, lb - 1], alphabet, axis=1)
            both = np.repeat(np.repeat(table[la - 1, lb - 1], alphabet, axis=0), alphabet, axis=1)
            last_a = np.arange(sizes[la]) % alphabet
            last_b = np.arange(sizes[lb]) % alphabet
            mismatch = (last_a[:, None] != last_b[None, :]).astype(np.int16)
            table[la, lb] = np.minimum(np.minimum(drop_a, drop_b) + 1, both + mismatch)
    return table


def exhaustive_edit_distance(alphabet: int = 4, max_len: int = 6) -> tuple[int, int]:
    """Returns (pairs checked, mismatching pairs) for the batch kernel."""
    seqs = all_sequences(alphabet, max_len)
    codes = np.zeros((sum(len(s) for s in seqs), max_len), dtype=np.int64)
    lens = np.zeros(codes.shape[0], dtype=np.int64)
    offsets = []
    row = 0
    for k, block in enumerate(seqs):
        offsets.append(row)
        codes[row:row + len(block), :k] = block
        lens[row:row + len(block)] = k
        row += len(block)
    got = pruning.edit_distance_matrix(codes, lens, codes, lens)
    expected = prefix_table(alphabet, max_len)
    bad = 0
    for (la, lb), block in expected.items():
        ra, rb = offsets[la], offsets[lb]
        bad += int(np.count_nonzero(got[ra:ra + block.shape[0], rb:rb + block.shape[1]] != block))
    return got.size, bad


def recursive_lev(a: tuple, b: tuple, memo: dict | None = None) -> int:
    memo = {} if memo is None else memo
    key = (a, b)
    if key not in memo:
        if not a or not b:
            memo[key] = len(a) + len(b)
        else:
            memo[key] = min(recursive_lev(a[1:], b, memo) + 1, recursive_lev(a, b[1:], memo) + 1,
                            recursive_lev(a[1:], b[1:], memo) + (a[0] != b[0]))
    return memo[key]


def suite_edit_distance(n_seeds: int) -> SuiteResult:
    res = SuiteResult("edit-distance", True)
    pairs, bad = exhaustive_edit_distance()
    if bad:
        res.failures.append(f"exhaustive: {bad} of {pairs} pairs differ from the prefix recursion")
    res.max_error = float(bad)
    rng = random.Random(1234)
    alphabet = list(range(6))
    for s in range(n_seeds):
        rng.seed(s)
        a, b, c = (tuple(rng.choice(alphabet) for _ in range(rng.randint(0, 8))) for _ in range(3))
        dab, dba = pruning.edit_distance(a, b), pruning.edit_distance(b, a)
        dac, dcb = pruning.edit_distance(a, c), pruning.edit_distance(c, b)
        checks = {
            "matches recursion": dab == recursive_lev(a, b),
            "non-negative": dab >= 0,
            "identity": (dab == 0) == (a == b) and pruning.edit_distance(a, a) == 0,
            "symmetry": dab == dba,
            "triangle": dab <= dac + dcb,
        }
        for name, ok in checks.items():
            if not ok:
                res.failures.append(f"seed {s}: metric property '{name}' violated for {a} vs {b}")
    res.passed = not res.failures
    return res


# --- rank-aware advantages -----------------------------------------------

def plain_advantages(rewards_: list[float], logps: list[float], alpha: float, floor: float = 1e-8) -> list[float]:
    g = len(rewards_)
    mean = sum(rewards_) / g
    std = math.sqrt(sum((r - mean) ** 2 for r in rewards_) / g)
    if std < floor:
        return [0.0] * g
    gamma = [1.0] * g
    for w in range(g):
        for l in range(g):
            if rewards_[w] > rewards_[l] and logps[w] < logps[l]:
                gamma[w] = gamma[l] = 1.0 + alpha
    return [gamma[i] * (rewards_[i] - mean) / std for i in range(g)]


def suite_rapo(n_seeds: int) -> SuiteResult:
    res = SuiteResult("rapo-advantage", True)
    for s in range(n_seeds):
        rng = random.Random(s)
        g = rng.randint(2, 8)
        r = [rng.uniform(-1.0, 2.0) for _ in range(g)]
        lp = [rng.uniform(-3.0, 0.0) for _ in range(g)]
        alpha = rng.uniform(0.0, 1.0)
        got = rewards.group_advantages(rewards.TrajectoryGroup(r, lp), rewards.RapoConfig(alpha=alpha))
        want = plain_advantages(r, lp, alpha)
        err = max(abs(x - y) for x, y in zip(got, want))
        res.max_error = max(res.max_error, err)
        if err > 1e-9:
            res.failures.append(f"seed {s}: advantage error {err:.3g}")
        zero_alpha = rewards.group_advantages(rewards.TrajectoryGroup(r, lp), rewards.RapoConfig(alpha=0.0))
        arr = np.asarray(r, dtype=float)
        plain = (arr - arr.mean()) / arr.std()
        if not np.array_equal(zero_alpha, plain):
            res.failures.append(f"seed {s}: alpha=0 differs from plain group normalization")
    res.passed = not res.failures
    return res


# --- rewards ---------------------------------------------------------------

def suite_reward(n_seeds: int) -> SuiteResult:
    res = SuiteResult("tool-reward", True)
    v = rewards.tool_reward(0, True, 1)
    res.max_error = abs(v - 0.49)
    if res.max_error > 1e-12:
        res.failures.append(f"tool_reward(0, success, 1) = {v!r}, expected 0.49")
    for success in (True, False):
        for s in range(10):
            vals = [rewards.tool_reward(s, success, n) for n in range(10)]
            if any(b >= a for a, b in zip(vals, vals[1:])):
                res.failures.append(f"not decreasing in n_turns at step {s}, success={success}")
        for n in range(10):
            vals = [rewards.tool_reward(s, success, n) for s in range(10)]
            if vals[0] != 0.0 and any(abs(b) >= abs(a) for a, b in zip(vals, vals[1:])):
                res.failures.append(f"magnitude not decaying in step at n_turns={n}, success={success}")
    res.passed = not res.failures
    return res


# --- confidence ------------------------------------------------------------

_SNIPPETS = [
    "x = sum(vals)",
    'total = df[df["year"] == "2008"]["points"].mean()\nprint(total)',
    "for i in range(10):\n    acc += rows[i] * 2.5",
    "if score > 3 and name != 'bob':\n    print(name)",
    "result = max(times) - min(times)\nprint(round(result, 2))",
]


def suite_confidence(n_seeds: int) -> SuiteResult:
    res = SuiteResult("anti-dilution", True)
    for s in range(n_seeds):
        rng = random.Random(s)
        code = rng.choice(_SNIPPETS)
        toks = list(tokenize(code, lambda _p: -rng.random() * 3))
        mask = confidence.identify_significant(code, toks)
        base = confidence.compute_confidence(toks, mask)
        noisy = [t if i in mask else confidence.TokenRecord(t.text, -rng.random() * 10, t.start, t.end)
                 for i, t in enumerate(toks)]
        other = confidence.compute_confidence(noisy, mask)
        if other.confidence != base.confidence:
            res.max_error = max(res.max_error, abs(other.confidence - base.confidence))
            res.failures.append(f"seed {s}: confidence moved from {base.confidence!r} to {other.confidence!r}")
        if not 0.0 < base.confidence <= 1.0:
            res.failures.append(f"seed {s}: confidence {base.confidence} outside (0, 1]")
    res.passed = not res.failures
    return res


# --- aggregation -----------------------------------------------------------

def suite_aggregation(n_seeds: int) -> SuiteResult:
    res = SuiteResult("aggregation", True)
    for s in range(n_seeds):
        rng = random.Random(s)
        n = rng.randint(1, 12)
        answers = [rng.choice(["a", "b", "c", "42", "42.0", "7"]) for _ in range(n)]
        weights = [rng.uniform(1e-3, 1.0) for _ in range(n)]
        base = aggregation.vote(answers, weights)
        scale = rng.uniform(0.01, 100.0)
        scaled = aggregation.vote(answers, [w * scale for w in weights])
        if scaled.answer != base.answer:
            res.failures.append(f"seed {s}: argmax changed under scaling by {scale}")
        if not 0.0 < base.confidence <= 1.0:
            res.failures.append(f"seed {s}: u={base.confidence} outside (0, 1]")
        cons = abs(math.fsum(base.per_answer_weights.values()) - math.fsum(weights))
        res.max_error = max(res.max_error, cons)
        if cons > 1e-12:
            res.failures.append(f"seed {s}: weight conservation error {cons:.3g}")
        equal = aggregation.vote(answers, [0.5] * n)
        canon = [aggregation.normalize_answer(a).canonical for a in answers]
        counts = {c: canon.count(c) for c in set(canon)}
        majority = min(counts, key=lambda c: (-counts[c], c))
        if equal.answer != majority:
            res.failures.append(f"seed {s}: equal weights gave {equal.answer!r}, majority is {majority!r}")
    res.passed = not res.failures
    return res


# --- pruning benefit -------------------------------------------------------

def suite_pruning(n_seeds: int) -> SuiteResult:
    res = SuiteResult("pruning-benefit", True)
    trials = [synthetic.run_trial(s) for s in range(n_seeds)]
    rate = sum(t.helped for t in trials) / len(trials)
    res.max_error = 1.0 - rate
    if rate < 0.95:
        res.failures.append(f"pruning helped in {rate:.1%} of seeds, need >= 95%")
    res.passed = not res.failures
    return res


SUITES: dict[str, Callable[[int], SuiteResult]] = {
    "edit-distance": suite_edit_distance,
    "rapo-advantage": suite_rapo,
    "tool-reward": suite_reward,
    "anti-dilution": suite_confidence,
    "aggregation": suite_aggregation,
    "pruning-benefit": suite_pruning,
}


def run_suites(n_seeds: int, names=None) -> list[SuiteResult]:
    if n_seeds < 1:
        raise ValueError("seed count must be positive")
    out = []
    for name in names or SUITES:
        t0 = time.perf_counter()
        try:
            r = SUITES[name](n_seeds)
        except Exception as exc:
            r = SuiteResult(name, False, math.inf, failures=[f"crashed: {exc!r}"])
        r.seconds = time.perf_counter() - t0
        out.append(r)
    return out
