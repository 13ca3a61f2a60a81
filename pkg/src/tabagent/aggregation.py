"""Dual-weighted voting over completed trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .pruning import CandidatePlan
from .table import NormalizedAnswer, TaskKind, answers_match, normalize_answer

_MIN_WEIGHT = math.ulp(0.0)


class AbstainError(Exception):
    """No trajectory produced a usable answer."""

    def __init__(self, message: str, diagnostics: Sequence[str] = ()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


@dataclass(frozen=True)
class TrajectoryStep:
    thought: str
    action_code: Optional[str] = None
    confidence: Optional[float] = None
    observation: Optional[str] = None
    answer: Optional[str] = None
    refined: bool = False
    exec_status: Optional[str] = None  # sandbox status of action_code: ok, error or timeout


@dataclass(frozen=True)
class CompletedTrajectory:
    plan: CandidatePlan
    action_confidences: tuple[float, ...] = ()
    answer: Optional[str] = None
    steps: tuple[TrajectoryStep, ...] = ()
    seq_logprob_norm: float = 0.0
    failure: Optional[str] = None
    transcript: str = ""

    @property
    def succeeded(self) -> bool:
        return self.failure is None and bool(self.answer)

    @property
    def can_vote(self) -> bool:
        return self.succeeded and len(self.action_confidences) > 0

    @property
    def executable(self) -> bool:
        """True when the last action ran cleanly."""
        ran = [s.exec_status for s in self.steps if s.action_code is not None]
        return bool(ran) and ran[-1] == "ok"


@dataclass(frozen=True)
class AggregationResult:
    answer: str
    confidence: float
    per_answer_weights: dict = field(default_factory=dict)
    display_answer: str = ""
    n_voters: int = 0


def sigmoid(t: float) -> float:
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    z = math.exp(t)
    return z / (1.0 + z)


def history_confidence(action_confidences: Sequence[float]) -> float:
    if not action_confidences:
        raise ValueError("a trajectory without actions has no history confidence")
    return math.fsum(action_confidences) / len(action_confidences)


def trajectory_weight(s_con: float, c_h: float) -> float:
    if not 0.0 < c_h <= 1.0:
        raise ValueError(f"history confidence must be in (0, 1], got {c_h}")
    return max(sigmoid(s_con) * c_h, _MIN_WEIGHT)


def weight_of(traj: CompletedTrajectory) -> float:
    s_con = traj.plan.s_con if traj.plan.s_con is not None else 0.0
    return trajectory_weight(s_con, history_confidence(traj.action_confidences))


def vote(answers: Sequence[str], weights: Sequence[float], kind=TaskKind.TABLE_QA) -> AggregationResult:
    """Weighted vote over raw answers; equivalent answers share one bucket."""
    if not answers:
        raise AbstainError("no votes to aggregate")
    if len(answers) != len(weights):
        raise ValueError("answers and weights differ in length")
    keys: list[NormalizedAnswer] = []
    members: list[list[int]] = []
    for i, raw in enumerate(answers):
        norm = normalize_answer(raw, kind)
        for g, key in enumerate(keys):
            if answers_match(key, norm):
                members[g].append(i)
                break
        else:
            keys.append(norm)
            members.append([i])
    totals = {keys[g].canonical: math.fsum(weights[i] for i in idx) for g, idx in enumerate(members)}
    best = min(range(len(keys)), key=lambda g: (-totals[keys[g].canonical], keys[g].canonical))
    total = math.fsum(weights)
    winner = keys[best].canonical
    return AggregationResult(
        answer=winner,
        confidence=min(1.0, totals[winner] / total),
        per_answer_weights=totals,
        display_answer=answers[members[best][0]],
        n_voters=len(answers),
    )


def aggregate(trajectories: Sequence[CompletedTrajectory], kind=TaskKind.TABLE_QA) -> AggregationResult:
    voters = [t for t in trajectories if t.can_vote]
    if not voters:
        diagnostics = [
            f"sample {t.plan.sample_index}: {t.failure or ('no actions' if t.succeeded else 'no answer')}"
            for t in trajectories
        ]
        raise AbstainError("no successful trajectory to aggregate", diagnostics)
    return vote([t.answer for t in voters], [weight_of(t) for t in voters], kind)
