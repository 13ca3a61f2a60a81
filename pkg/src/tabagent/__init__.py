"""Uncertainty-aware inference for tool-using table reasoning agents.

The pipeline samples candidate plans, prunes them against a memory of past
successes and failures, gates each generated program on its token
confidence, and votes over the surviving trajectories.
"""

from .agent import AgentConfig, SolveResult, solve
from .aggregation import AggregationResult, CompletedTrajectory, aggregate
from .memory import HashingEmbedder, MemoryBank, build_memory, load_bank, retrieve
from .plans import ActionPrimitive, abstract_plan
from .pruning import CandidatePlan, PruningConfig, edit_distance, prune
from .rewards import RapoConfig, RewardConfig, group_advantages, tool_reward
from .table import Table, TaskInstance, TaskKind, normalize_answer

__version__ = "0.1.0"

__all__ = [
    "ActionPrimitive", "AgentConfig", "AggregationResult", "CandidatePlan", "CompletedTrajectory",
    "HashingEmbedder", "MemoryBank", "PruningConfig", "RapoConfig", "RewardConfig", "SolveResult", "Table",
    "TaskInstance", "TaskKind", "abstract_plan", "aggregate", "build_memory", "edit_distance",
    "group_advantages", "load_bank", "normalize_answer", "prune", "retrieve", "solve", "tool_reward",
]
