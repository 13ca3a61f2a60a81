"""Reward shaping and rank-aware group advantages.

Pure value computations that mirror the training objective: no gradients, no
optimizer. Useful as an oracle when checking a trainer's loss code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .grammar import is_well_formed
from .table import TaskKind, is_correct

GammaMode = Literal["any", "winner", "loser"]


@dataclass(frozen=True)
class RewardConfig:
    decay_rate: float = 0.05
    penalty_coeff: float = 0.01
    base_reward: float = 0.5

    def __post_init__(self):
        if self.decay_rate < 0 or self.penalty_coeff < 0:
            raise ValueError("decay_rate and penalty_coeff must be non-negative")


@dataclass(frozen=True)
class RapoConfig:
    alpha: float = 0.5
    eps_low: float = 0.2
    eps_high: float = 0.28
    std_floor: float = 1e-8
    group_size: int = 8
    gamma_mode: GammaMode = "any"

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        for name in ("eps_low", "eps_high"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")
        if self.gamma_mode not in ("any", "winner", "loser"):
            raise ValueError(f"unknown gamma_mode {self.gamma_mode!r}")


@dataclass(frozen=True)
class RewardBreakdown:
    format: int
    accuracy: int
    tool: float

    @property
    def total(self) -> float:
        return self.format + self.accuracy + self.tool


@dataclass
class TrajectoryGroup:
    rewards: Sequence[float]
    seq_logprobs: Sequence[float]
    token_logprobs_new: Sequence[Sequence[float]] = field(default_factory=list)
    token_logprobs_old: Sequence[Sequence[float]] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.rewards)


def format_reward(output_text: str) -> int:
    return int(is_well_formed(output_text))


def accuracy_reward(pred: str, gold: str, kind=TaskKind.TABLE_QA) -> int:
    if pred is None:
        return 0
    return int(is_correct(pred, gold, kind))


def tool_reward(step: int, success: bool, n_turns: int, cfg: RewardConfig = RewardConfig()) -> float:
    if step < 0 or n_turns < 0:
        raise ValueError("step and n_turns must be non-negative")
    return math.exp(-cfg.decay_rate * step) * (cfg.base_reward * float(success) - cfg.penalty_coeff * n_turns ** 2)


def trajectory_reward(output_text: str, pred: str | None, gold: str, kind, step: int,
                      tool_success: bool, n_turns: int, cfg: RewardConfig = RewardConfig()) -> RewardBreakdown:
    return RewardBreakdown(
        format=format_reward(output_text),
        accuracy=accuracy_reward(pred, gold, kind),
        tool=tool_reward(step, tool_success, n_turns, cfg),
    )


def misaligned_pairs(rewards: Sequence[float], seq_logprobs: Sequence[float]) -> list[tuple[int, int]]:
    """(winner, loser) pairs where the lower-reward member is the more likely one."""
    r = np.asarray(rewards, dtype=float)
    lp = np.asarray(seq_logprobs, dtype=float)
    w, l = np.nonzero((r[:, None] > r[None, :]) & (lp[:, None] < lp[None, :]))
    return list(zip(w.tolist(), l.tolist()))


def group_advantages(group: TrajectoryGroup, cfg: RapoConfig = RapoConfig()) -> np.ndarray:
    if group.size < 2:
        raise ValueError(f"group needs at least 2 trajectories, got {group.size}")
    if len(group.seq_logprobs) != group.size:
        raise ValueError("rewards and seq_logprobs differ in length")
    r = np.asarray(group.rewards, dtype=float)
    std = r.std()
    if std < cfg.std_floor:
        return np.zeros_like(r)
    base = (r - r.mean()) / std
    boosted = np.zeros(group.size, dtype=bool)
    for w, l in misaligned_pairs(r, group.seq_logprobs):
        if cfg.gamma_mode in ("any", "winner"):
            boosted[w] = True
        if cfg.gamma_mode in ("any", "loser"):
            boosted[l] = True
    gamma = np.where(boosted, 1.0 + cfg.alpha, 1.0)
    return gamma * base


def rapo_objective(group: TrajectoryGroup, advantages: Sequence[float], cfg: RapoConfig = RapoConfig()) -> float:
    new, old = group.token_logprobs_new, group.token_logprobs_old
    if len(new) != len(old) or len(new) != len(advantages):
        raise ValueError("token lists and advantages must cover the same trajectories")
    total_tokens = 0
    acc = []
    for i, (lp_new, lp_old) in enumerate(zip(new, old)):
        if len(lp_new) != len(lp_old):
            raise ValueError(f"trajectory {i}: {len(lp_new)} new vs {len(lp_old)} old token logprobs")
        ratio = np.exp(np.asarray(lp_new, dtype=float) - np.asarray(lp_old, dtype=float))
        a = float(advantages[i])
        clipped = np.clip(ratio, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high)
        acc.append(np.minimum(ratio * a, clipped * a))
        total_tokens += len(lp_new)
    if total_tokens == 0:
        raise ValueError("objective undefined for a group with no tokens")
    return float(np.concatenate(acc).sum() / total_tokens)
