"""Seeded synthetic worlds for checking that contrastive pruning helps.

Correct candidates are planted within one edit of a positive prototype and
flawed ones within one edit of a negative prototype; pruning should then
keep a larger share of correct candidates than the raw sample holds.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .plans import ActionPrimitive, ActionSequence
from .pruning import CandidatePlan, PruningConfig, contrastive_score, prune

ALPHABET = tuple(ActionPrimitive)


@dataclass(frozen=True)
class PruningTrial:
    seed: int
    before: float  # fraction of correct candidates in the full sample
    after: float  # fraction of correct candidates among those retained
    n_candidates: int
    n_retained: int

    @property
    def helped(self) -> bool:
        return self.after >= self.before


def random_sequence(rng: random.Random, lo: int = 2, hi: int = 6) -> ActionSequence:
    return tuple(rng.choice(ALPHABET) for _ in range(rng.randint(lo, hi)))


def mutate(rng: random.Random, seq: ActionSequence) -> ActionSequence:
    """Apply at most one random insertion, deletion or substitution."""
    seq = list(seq)
    op = rng.choice(("keep", "insert", "delete", "substitute"))
    if op == "insert":
        seq.insert(rng.randint(0, len(seq)), rng.choice(ALPHABET))
    elif op == "delete" and len(seq) > 1:
        del seq[rng.randrange(len(seq))]
    elif op == "substitute" and seq:
        seq[rng.randrange(len(seq))] = rng.choice(ALPHABET)
    return tuple(seq)


def run_trial(seed: int, n_candidates: int = 16, n_pos: int = 3, n_neg: int = 2,
              retention_ratio: float = 0.5) -> PruningTrial:
    rng = random.Random(seed)
    s_pos = [random_sequence(rng) for _ in range(n_pos)]
    s_neg = [random_sequence(rng) for _ in range(n_neg)]
    labels = [rng.random() < 0.5 for _ in range(n_candidates)]
    if not any(labels):
        labels[rng.randrange(n_candidates)] = True
    cfg = PruningConfig(retention_ratio)
    cands = []
    for i, good in enumerate(labels):
        proto = rng.choice(s_pos if good else s_neg)
        cands.append(contrastive_score(CandidatePlan(f"synthetic-{i}", mutate(rng, proto), i), s_pos, s_neg, cfg))
    kept = prune(cands, cfg)
    after = sum(labels[c.sample_index] for c in kept) / len(kept)
    return PruningTrial(seed, sum(labels) / len(labels), after, len(cands), len(kept))
