"""Per-task pipeline: sample plans, prune against memory, run gated trajectories, vote."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .aggregation import AbstainError, AggregationResult, CompletedTrajectory, TrajectoryStep, aggregate
from .clients import (CountingLLM, CountingSandbox, Generation, LLMClient, LLMError, SandboxClient,
                      truncate_output)
from .confidence import ConfidenceReport, TokenRecord, code_confidence, low_confidence_lexemes, should_refine
from .grammar import (ACTION_OPEN, ANSWER_CLOSE, ANSWER_OPEN, FENCE, GrammarError, format_observation,
                      parse_step)
from .memory import BankError, EmbeddingProvider, MemoryBank, retrieve
from .plans import RuleTable, abstract_plan
from .pruning import CandidatePlan, PruningConfig, contrastive_score, prune
from .table import TaskInstance, serialize_table

log = logging.getLogger(__name__)

TEMPLATE_VERSION = 1


@dataclass(frozen=True)
class AgentConfig:
    n_samples: int = 16
    top_k: int = 5
    retention_ratio: float = 0.5
    conf_threshold: float = 0.8
    max_turns: int = 3
    temperature: float = 1.0
    max_tokens_per_turn: int = 2048
    max_refine_retries: int = 1
    seed: int = 0
    d_cap: int = 16
    exec_timeout: float = 10.0
    max_table_cells: int = 4096

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.max_turns < 1:
            raise ValueError("max_turns must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not 0.0 < self.conf_threshold < 1.0:
            raise ValueError("conf_threshold must be in (0, 1)")
        if self.max_refine_retries < 0:
            raise ValueError("max_refine_retries must be >= 0")
        PruningConfig(self.retention_ratio, self.d_cap)

    @property
    def pruning(self) -> PruningConfig:
        return PruningConfig(self.retention_ratio, self.d_cap)


INSTRUCTIONS = f"""You are a table reasoning agent. You answer questions about a table by \
planning, writing Python code that runs in a sandbox, and reflecting on what the code prints.

Work in turns. Each reply has two parts:
1. A short thought in plain text.
2. Exactly one of:
   - an action, a Python program between a line `{ACTION_OPEN}` and a line `{FENCE}`;
     it runs in a fresh interpreter, so copy the values you need from the table and print the result;
   - the final answer between {ANSWER_OPEN} and {ANSWER_CLOSE}.
After each action you receive the program output as an observation. Write nothing after the block."""

PLAN_REQUEST = ("Before writing any code, outline your plan as a few short steps. "
                "Reply with the plan only.")

EXECUTE_REQUEST = "Carry out the plan. Reply with a thought and one action or the final answer."

REFINE_REQUEST = ("Before this code runs, review it. The model was unsure about: {lexemes}. "
                  "Check these names and literals against the table and the question, then reply "
                  "with a thought and the corrected action.")

FORMAT_ERROR = "Format error: {error}. Reply with a thought followed by one action block or an answer block."


def build_prompt(task: TaskInstance, max_cells: int = 4096) -> list[dict]:
    body = (f"Task type: {task.kind.value}\n\nTable:\n{serialize_table(task.table, max_cells)}\n\n"
            f"Question: {task.question}")
    return [{"role": "system", "content": INSTRUCTIONS}, {"role": "user", "content": body}]


def plan_messages(task: TaskInstance, cfg: AgentConfig) -> list[dict]:
    return build_prompt(task, cfg.max_table_cells) + [{"role": "user", "content": PLAN_REQUEST}]


def sample_plans(task: TaskInstance, llm: LLMClient, cfg: AgentConfig,
                 rules: RuleTable | None = None) -> list[CandidatePlan]:
    msgs = plan_messages(task, cfg)
    out = []
    for i in range(cfg.n_samples):
        try:
            gen = llm.generate(msgs, cfg.temperature, cfg.max_tokens_per_turn, cfg.seed + i)
        except Exception as exc:
            log.warning("task %s: plan sample %d dropped: %s", task.id, i, exc)
            continue
        text = gen.text.strip()
        out.append(CandidatePlan(text, abstract_plan(text, rules), i))
    if not out:
        raise LLMError(f"task {task.id}: all {cfg.n_samples} plan samples failed")
    return out


def _slice_tokens(text: str, tokens: Sequence[TokenRecord], start: int, end: int) -> list[TokenRecord]:
    """Tokens overlapping text[start:end], re-based to byte offsets within that slice."""
    b0 = len(text[:start].encode("utf-8"))
    b1 = b0 + len(text[start:end].encode("utf-8"))
    out = []
    for t in tokens:
        if t.end > b0 and t.start < b1:
            out.append(TokenRecord(t.text, t.logprob, max(t.start, b0) - b0, min(t.end, b1) - b0))
    return out


@dataclass
class _Action:
    gen: Generation
    code: str
    report: ConfidenceReport
    tokens: list

    @property
    def confidence(self) -> float:
        return self.report.confidence


def _as_action(gen: Generation):
    """Parse a reply into (action or None, parsed step); raises GrammarError."""
    step = parse_step(gen.text)
    if step.answer is not None:
        return None, step
    toks = _slice_tokens(gen.text, gen.tokens, step.code_start, step.code_end)
    report = code_confidence(step.code, toks) if toks else ConfidenceReport(1.0, frozenset(), True)
    return _Action(gen, step.code, report, toks), step


def run_trajectory(task: TaskInstance, plan: CandidatePlan, llm: LLMClient, sandbox: SandboxClient,
                   cfg: AgentConfig) -> CompletedTrajectory:
    msgs = build_prompt(task, cfg.max_table_cells) + [
        {"role": "assistant", "content": f"Plan:\n{plan.plan_text}"},
        {"role": "user", "content": EXECUTE_REQUEST},
    ]
    seed = cfg.seed + plan.sample_index
    steps: list[TrajectoryStep] = []
    confidences: list[float] = []
    logprobs: list[float] = []
    transcript: list[str] = []

    def generate(messages):
        return llm.generate(messages, cfg.temperature, cfg.max_tokens_per_turn, seed)

    def finish(answer=None, failure=None):
        norm = math.fsum(logprobs) / len(logprobs) if logprobs else 0.0
        return CompletedTrajectory(plan, tuple(confidences), answer, tuple(steps), norm, failure,
                                   "\n".join(transcript))

    for _turn in range(cfg.max_turns):
        try:
            gen = generate(msgs)
        except Exception as exc:
            return finish(failure=f"llm error: {exc}")
        try:
            action, step = _as_action(gen)
        except GrammarError as exc:
            logprobs.extend(t.logprob for t in gen.tokens)
            note = FORMAT_ERROR.format(error=exc)
            steps.append(TrajectoryStep(gen.text.strip(), observation=note))
            transcript.append(gen.text.strip())
            msgs += [{"role": "assistant", "content": gen.text}, {"role": "user", "content": note}]
            continue
        if action is None:
            logprobs.extend(t.logprob for t in gen.tokens)
            steps.append(TrajectoryStep(step.thought, answer=step.answer))
            transcript.append(gen.text.strip())
            return finish(answer=step.answer)

        refined = False
        retries = 0
        thought = step.thought
        while retries < cfg.max_refine_retries and should_refine(action.report, cfg.conf_threshold):
            retries += 1
            lexemes = low_confidence_lexemes(action.code, action.tokens, action.report.mask) or ["(none identified)"]
            ask = REFINE_REQUEST.format(lexemes=", ".join(f"`{x}`" for x in lexemes))
            try:
                regen = generate(msgs + [{"role": "assistant", "content": action.gen.text},
                                         {"role": "user", "content": ask}])
                candidate, cstep = _as_action(regen)
            except Exception as exc:
                log.info("task %s sample %d: refinement discarded: %s", task.id, plan.sample_index, exc)
                continue
            if candidate is None:
                continue
            action, thought, refined = candidate, cstep.thought, True

        logprobs.extend(t.logprob for t in action.gen.tokens)
        confidences.append(action.confidence)
        result = sandbox.execute(action.code, cfg.exec_timeout)
        if result.status == "ok":
            observation = truncate_output(result.stdout.strip() or "(no output)")
        else:
            observation = truncate_output(f"[{result.status}] {result.stderr.strip() or result.stdout.strip()}")
        steps.append(TrajectoryStep(thought, action.code, action.confidence, observation, refined=refined,
                                    exec_status=result.status))
        obs_block = format_observation(observation)
        transcript += [action.gen.text.strip(), obs_block]
        msgs += [{"role": "assistant", "content": action.gen.text}, {"role": "user", "content": obs_block}]
    return finish(failure=f"no answer within {cfg.max_turns} turns")


@dataclass
class SolveResult:
    task_id: str
    result: Optional[AggregationResult]
    candidates: list[CandidatePlan]
    retained: list[CandidatePlan]
    trajectories: list[CompletedTrajectory]
    n_llm_calls: int = 0
    n_sandbox_calls: int = 0
    n_sandbox_ok: int = 0
    diagnostics: list[str] = field(default_factory=list)
    sandbox_codes: list[str] = field(default_factory=list)

    @property
    def abstained(self) -> bool:
        return self.result is None


def score_candidates(candidates: Sequence[CandidatePlan], question: str, bank: MemoryBank | None,
                     provider: EmbeddingProvider | None, cfg: AgentConfig) -> tuple[list, list]:
    """Returns (scored candidates, retained candidates)."""
    if bank is None or len(bank) == 0:
        scored = [replace(c, s_con=0.0) for c in candidates]
        return scored, list(scored)
    if provider is None:
        raise BankError("a memory bank needs an embedding provider")
    if provider.id != bank.provider_id:
        raise BankError(f"provider {provider.id!r} does not match bank provider {bank.provider_id!r}")
    s_pos, s_neg = retrieve(bank, provider.embed(question), cfg.top_k)
    scored = [contrastive_score(c, s_pos, s_neg, cfg.pruning) for c in candidates]
    return scored, prune(scored, cfg.pruning)


def solve(task: TaskInstance, bank: MemoryBank | None, llm: LLMClient, sandbox: SandboxClient,
          provider: EmbeddingProvider | None, cfg: AgentConfig = AgentConfig(),
          rules: RuleTable | None = None) -> SolveResult:
    llm_c, sb_c = CountingLLM(llm), CountingSandbox(sandbox)
    candidates = sample_plans(task, llm_c, cfg, rules)
    scored, retained = score_candidates(candidates, task.question, bank, provider, cfg)
    trajectories = [run_trajectory(task, p, llm_c, sb_c, cfg) for p in retained]
    diagnostics = []
    try:
        result = aggregate(trajectories, task.kind)
    except AbstainError as exc:
        result = None
        diagnostics = [str(exc)] + exc.diagnostics
    return SolveResult(task.id, result, scored, retained, trajectories, llm_c.calls, sb_c.calls, sb_c.ok,
                       diagnostics, sb_c.codes)
