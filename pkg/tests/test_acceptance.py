"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` or directly as a script.
"""

from __future__ import annotations

import json
import math
import random
import sys
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from tabagent import pruning  # noqa: E402
from tabagent.agent import AgentConfig, solve  # noqa: E402
from tabagent.aggregation import vote  # noqa: E402
from tabagent.cli import main as cli_main  # noqa: E402
from tabagent.clients import ScriptedLLM, StubSandbox, tokenize  # noqa: E402
from tabagent.confidence import TokenRecord, compute_confidence, identify_significant  # noqa: E402
from tabagent.memory import HashingEmbedder, load_bank  # noqa: E402
from tabagent.rewards import RapoConfig, TrajectoryGroup, format_reward, group_advantages, tool_reward  # noqa: E402
from tabagent.synthetic import run_trial  # noqa: E402
from tabagent.table import is_correct, load_dataset  # noqa: E402
from tabagent.verify import exhaustive_edit_distance, recursive_lev  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"
E2E = FIXTURES / "e2e"

LINES: list[str] = []


def report(n: int, title: str, ok: bool, detail: str) -> None:
    LINES.append(f"criterion {n} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")


@pytest.fixture(scope="module", autouse=True)
def _print_summary(request):
    yield
    tr = request.config.pluginmanager.get_plugin("terminalreporter")
    if tr is not None:
        tr.write_line("")
        for line in LINES:
            tr.write_line(line)


def test_c1_edit_distance_oracle():
    pruning.edit_distance((1, 2), (2,))  # load the compiled kernel outside the timed region
    pruning.edit_distance_matrix(np.zeros((1, 1), dtype=np.int64), [1], np.zeros((1, 1), dtype=np.int64), [1])
    t0 = time.perf_counter()
    pairs, bad = exhaustive_edit_distance(alphabet=4, max_len=6)
    elapsed = time.perf_counter() - t0
    # tie the table to the textbook recursion and the scalar entry point on a sample
    rng = random.Random(0)
    sample_bad = 0
    for _ in range(2000):
        a = tuple(rng.randrange(4) for _ in range(rng.randint(0, 6)))
        b = tuple(rng.randrange(4) for _ in range(rng.randint(0, 6)))
        sample_bad += pruning.edit_distance(a, b) != recursive_lev(a, b)
    ok = pairs == 5461 ** 2 and bad == 0 and sample_bad == 0 and elapsed < 5.0
    report(1, "edit distance vs exhaustive oracle", ok,
           f"{pairs} pairs, {bad} mismatches, {sample_bad} scalar mismatches, {elapsed:.2f}s (limit 5s)")
    assert ok


def test_c2_rapo_advantage_oracle():
    rng = random.Random(2024)
    worst = 0.0
    exact_plain = True
    for _ in range(1000):
        g = rng.randint(2, 8)
        rewards = [rng.uniform(0, 1) for _ in range(g)]
        logps = [rng.uniform(-5, 0) for _ in range(g)]
        got = group_advantages(TrajectoryGroup(rewards, logps), RapoConfig(alpha=0.5))
        want = oracles.advantages(rewards, logps, 0.5)
        worst = max(worst, max(abs(x - y) for x, y in zip(got, want)))
        r = np.asarray(rewards)
        plain = (r - r.mean()) / r.std()
        zero = group_advantages(TrajectoryGroup(rewards, logps), RapoConfig(alpha=0.0))
        exact_plain &= bool(np.array_equal(zero, plain))
    ok = worst <= 1e-9 and exact_plain
    report(2, "rank-aware advantages vs re-derivation", ok,
           f"max abs error {worst:.3g} (limit 1e-9), alpha=0 equals plain normalization: {exact_plain}")
    assert ok


def test_c3_tool_reward():
    value = tool_reward(0, True, 1)
    err = abs(value - 0.49)
    grid = range(100)
    decays_in_s = all(
        abs(tool_reward(s + 1, ok, n)) <= abs(tool_reward(s, ok, n)) for s in grid for ok in (True, False)
        for n in (1, 2, 3)
    ) and all(tool_reward(s + 1, True, 1) < tool_reward(s, True, 1) for s in grid)
    decays_in_n = all(tool_reward(s, ok, n + 1) < tool_reward(s, ok, n) for n in grid for ok in (True, False)
                      for s in (0, 5, 20))
    ok = err <= 1e-12 and decays_in_s and decays_in_n
    report(3, "tool reward value and monotone decay", ok,
           f"tool_reward(0, success, 1)={value!r} (error {err:.2g}), decay in s: {decays_in_s}, "
           f"decay in turns: {decays_in_n}")
    assert ok


_NAMES = ["df", "rows", "total", "year", "gold", "sum", "len", "max", "price", "team"]


def _random_code(rng: random.Random) -> str:
    parts = []
    for _ in range(rng.randint(1, 4)):
        lhs = rng.choice(_NAMES)
        rhs = rng.choice([f"{rng.choice(_NAMES)}({rng.choice(_NAMES)})", f"{rng.randint(0, 9999)}",
                          f"'{rng.choice(_NAMES)}'", f"{rng.choice(_NAMES)}[{rng.randint(0, 9)}] + 1.5",
                          f"[x for x in {rng.choice(_NAMES)} if x > {rng.randint(0, 99)}]"])
        parts.append(f"{lhs} = {rhs}")
    return "\n".join(parts)


def test_c4_anti_dilution():
    rng = random.Random(4)
    changed = 0
    for _ in range(1000):
        code = _random_code(rng)
        toks = tokenize(code, lambda _t: -rng.uniform(0, 3))
        mask = identify_significant(code, toks)
        assert mask, code
        noisy = [t if i in mask else TokenRecord(t.text, -rng.uniform(0, 50), t.start, t.end)
                 for i, t in enumerate(toks)]
        changed += compute_confidence(toks, mask).confidence != compute_confidence(noisy, mask).confidence
    ok = changed == 0
    report(4, "anti-dilution", ok, f"{changed} of 1000 confidences changed under non-significant noise")
    assert ok


def test_c5_aggregation_properties():
    rng = random.Random(5)
    scale_flips = majority_misses = bad_u = 0
    worst_conservation = 0.0
    for _ in range(1000):
        n = rng.randint(1, 12)
        answers = [rng.choice("abcde") for _ in range(n)]
        weights = [rng.uniform(1e-3, 1.0) for _ in range(n)]
        base = vote(answers, weights)
        scale = rng.uniform(0.01, 100.0)
        scale_flips += vote(answers, [w * scale for w in weights]).answer != base.answer
        counts = Counter(answers)
        majority = sorted(counts, key=lambda k: (-counts[k], k))[0]
        majority_misses += vote(answers, [0.37] * n).answer != majority
        bad_u += not 0.0 < base.confidence <= 1.0
        worst_conservation = max(worst_conservation,
                                 abs(math.fsum(base.per_answer_weights.values()) - math.fsum(weights)))
    ok = scale_flips == 0 and majority_misses == 0 and bad_u == 0 and worst_conservation <= 1e-12
    report(5, "aggregation invariants", ok,
           f"scaling flips {scale_flips}, majority misses {majority_misses}, u out of range {bad_u}, "
           f"weight conservation error {worst_conservation:.2g} (limit 1e-12)")
    assert ok


def test_c6_pruning_benefit():
    t0 = time.perf_counter()
    trials = [run_trial(seed, retention_ratio=0.5) for seed in range(200)]
    elapsed = time.perf_counter() - t0
    helped = sum(t.helped for t in trials)
    ok = helped >= 0.95 * len(trials) and elapsed < 10.0
    report(6, "pruning benefit on synthetic worlds", ok,
           f"{helped}/200 seeds kept at least the prior correct fraction (need 190), {elapsed:.2f}s (limit 10s)")
    assert ok


def test_c7_end_to_end(tmp_path):
    args = ["evaluate", "--dataset", str(E2E / "dataset.jsonl"), "--memory", str(E2E / "memory.jsonl"),
            "--llm", f"transcript:{E2E / 'transcript.json'}", "--sandbox", f"stub:{E2E / 'sandbox.json'}",
            "--n-samples", "4", "--retention", "0.5", "--seed", "0"]
    t0 = time.perf_counter()
    codes = [cli_main(args + ["--out", str(tmp_path / f"run{i}.jsonl")]) for i in range(3)]
    elapsed = time.perf_counter() - t0
    blobs = [(tmp_path / f"run{i}.jsonl").read_bytes() for i in range(3)]
    records = [json.loads(line) for line in blobs[0].decode().splitlines()][:-1]
    n_correct = sum(r["correct"] for r in records)

    # call counters: pruned plans never reach the sandbox
    tasks = load_dataset(E2E / "dataset.jsonl")
    bank = load_bank(E2E / "memory.jsonl")
    llm, sandbox, provider = ScriptedLLM.load(E2E / "transcript.json"), StubSandbox.load(E2E / "sandbox.json"), \
        HashingEmbedder(bank.dimension)
    pruned_calls = 0
    fewer = True
    for task in tasks:
        res = solve(task, bank, llm, sandbox, provider, AgentConfig(n_samples=4, retention_ratio=0.5))
        full = solve(task, bank, llm, sandbox, provider, AgentConfig(n_samples=4, retention_ratio=1.0))
        kept = {c.sample_index for c in res.retained}
        retained_actions = sum(1 for t in res.trajectories if t.plan.sample_index in kept
                               for s in t.steps if s.action_code is not None)
        pruned_calls += res.n_sandbox_calls - retained_actions
        fewer &= res.n_sandbox_calls < full.n_sandbox_calls
        assert is_correct(res.result.display_answer, task.gold_answer, task.kind)

    ok = (all(c == 0 for c in codes) and n_correct == 10 and len(records) == 10
          and blobs[0] == blobs[1] == blobs[2] and elapsed < 10.0 and pruned_calls == 0 and fewer)
    report(7, "end-to-end determinism", ok,
           f"{n_correct}/10 correct, identical reports: {blobs[0] == blobs[1] == blobs[2]}, "
           f"{elapsed:.2f}s for 3 runs (limit 10s), sandbox calls from pruned plans: {pruned_calls}")
    assert ok


def test_c8_format_reward():
    cases = json.loads((FIXTURES / "format_cases.json").read_text(encoding="utf-8"))
    accepted = sum(format_reward(t) == 1 for t in cases["well_formed"])
    rejected = sum(format_reward(t) == 0 for t in cases["malformed"])
    ok = len(cases["well_formed"]) == len(cases["malformed"]) == 20 and accepted == 20 and rejected == 20
    report(8, "format reward on hand-labeled transcripts", ok,
           f"accepted {accepted}/20 well-formed, rejected {rejected}/20 malformed")
    assert ok


def test_c9_configuration_defaults():
    cfg, rapo = AgentConfig(), RapoConfig()
    got = dict(n_samples=cfg.n_samples, top_k=cfg.top_k, retention_ratio=cfg.retention_ratio,
               max_turns=cfg.max_turns, temperature=cfg.temperature, max_tokens=cfg.max_tokens_per_turn,
               group_size=rapo.group_size)
    want = dict(n_samples=16, top_k=5, retention_ratio=0.5, max_turns=3, temperature=1.0, max_tokens=2048,
                group_size=8)
    ok = got == want
    report(9, "configuration defaults", ok, ", ".join(f"{k}={v}" for k, v in got.items()))
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
