"""Command-line entry points: build-memory, evaluate, collect, verify."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, fields

from .agent import AgentConfig, SolveResult, solve
from .clients import HTTPLLM, LLMError, ProcessSandbox, ScriptedLLM, StubSandbox
from .memory import BankError, BuildStats, HashingEmbedder, MemoryRecord, build_memory, load_bank, save_bank
from .plans import format_sequence
from .table import DatasetError, is_correct, load_dataset
from .verify import run_suites

log = logging.getLogger("tabagent")


class CliError(Exception):
    pass


# --- backends ------------------------------------------------------------

def make_llm(target: str):
    if target.startswith("transcript:"):
        return ScriptedLLM.load(target[len("transcript:"):])
    if target.startswith(("http://", "https://")):
        return HTTPLLM(target)
    raise CliError(f"--llm must be a URL or transcript:PATH, got {target!r}")


def make_sandbox(target: str):
    if target == "process":
        return ProcessSandbox()
    if target.startswith("stub:"):
        return StubSandbox.load(target[len("stub:"):])
    raise CliError(f"--sandbox must be 'process' or stub:PATH, got {target!r}")


_FLAG_FIELDS = {
    "n_samples": "n_samples", "top_k": "top_k", "retention": "retention_ratio",
    "conf_threshold": "conf_threshold", "max_turns": "max_turns", "temperature": "temperature",
    "seed": "seed",
}


def agent_config(args) -> AgentConfig:
    values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            values = json.load(fh)
        known = {f.name for f in fields(AgentConfig)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(unknown)}")
    for flag, name in _FLAG_FIELDS.items():
        if getattr(args, flag) is not None:
            values[name] = getattr(args, flag)
    return AgentConfig(**values)


def _load_memory(path):
    if path is None:
        return None, None
    bank = load_bank(path)
    return bank, HashingEmbedder(bank.dimension)


def _run_all(args):
    tasks = load_dataset(args.dataset)
    cfg = agent_config(args)
    bank, provider = _load_memory(args.memory)
    llm, sandbox = make_llm(args.llm), make_sandbox(args.sandbox)
    if args.jobs < 1:
        raise CliError("--jobs must be >= 1")

    def one(task):
        return solve(task, bank, llm, sandbox, provider, cfg)

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(one, tasks))  # map keeps task order
    return tasks, cfg, results


# --- reports -------------------------------------------------------------

def task_record(task, res: SolveResult) -> dict:
    answer = res.result.display_answer if res.result else None
    return {
        "id": task.id,
        "answer": answer,
        "gold": task.gold_answer,
        "correct": answer is not None and is_correct(answer, task.gold_answer, task.kind),
        "u": res.result.confidence if res.result else 0.0,
        "n_llm_calls": res.n_llm_calls,
        "n_sandbox_calls": res.n_sandbox_calls,
        "n_sandbox_ok": res.n_sandbox_ok,
        "turns_used": sum(len(t.steps) for t in res.trajectories),
        "retained_plans": len(res.retained),
    }


def summary_record(records: list[dict]) -> dict:
    n = len(records)
    calls = sum(r["n_sandbox_calls"] for r in records)
    return {
        "summary": True,
        "tasks": n,
        "accuracy": sum(r["correct"] for r in records) / n if n else 0.0,
        "avg_u": math.fsum(r["u"] for r in records) / n if n else 0.0,
        "avg_llm_calls": sum(r["n_llm_calls"] for r in records) / n if n else 0.0,
        "avg_sandbox_calls": calls / n if n else 0.0,
        "tool_pass_ratio": sum(r["n_sandbox_ok"] for r in records) / calls if calls else 0.0,
    }


def trace_record(task, res: SolveResult) -> dict:
    return {
        "id": task.id,
        "candidates": [{"sample_index": c.sample_index, "actions": format_sequence(c.action_seq),
                        "d_pos": c.d_pos, "d_neg": c.d_neg, "s_con": c.s_con} for c in res.candidates],
        "retained": [c.sample_index for c in res.retained],
        "trajectories": [{"sample_index": t.plan.sample_index, "answer": t.answer, "failure": t.failure,
                          "steps": [asdict(s) for s in t.steps]} for t in res.trajectories],
        "weights": res.result.per_answer_weights if res.result else {},
        "diagnostics": res.diagnostics,
    }


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


# --- commands ------------------------------------------------------------

def cmd_build_memory(args) -> int:
    tasks = {t.id: t for t in load_dataset(args.dataset)}
    records = []
    with open(args.dump, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                task = tasks.get(rec["task_id"])
                if task is None:
                    raise CliError(f"{args.dump}:{lineno}: unknown task id {rec['task_id']!r}")
                records.append(MemoryRecord(task.id, task.question, rec["plan"], rec.get("answer"),
                                            bool(rec["executable"]), task.gold_answer, task.kind))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CliError(f"{args.dump}:{lineno}: bad record: {exc}") from exc
    if not records:
        raise CliError("empty memory: the trajectory dump has no records")
    stats = BuildStats()
    bank = build_memory(records, HashingEmbedder(args.dimension), stats=stats)
    save_bank(bank, args.out)
    print(f"positive={stats.positive} negative={stats.negative} discarded={stats.discarded}")
    if bank.degenerate:
        log.warning("memory bank has only one polarity; pruning will rank on one side only")
    return 0


def cmd_evaluate(args) -> int:
    tasks, _cfg, results = _run_all(args)
    records = [task_record(t, r) for t, r in zip(tasks, results)]
    summary = summary_record(records)
    write_jsonl(args.out, records + [summary])
    if args.trace:
        write_jsonl(args.trace, [trace_record(t, r) for t, r in zip(tasks, results)])
    print(f"tasks={summary['tasks']} accuracy={summary['accuracy']:.4f} avg_u={summary['avg_u']:.4f} "
          f"avg_llm_calls={summary['avg_llm_calls']:.2f} avg_sandbox_calls={summary['avg_sandbox_calls']:.2f} "
          f"tool_pass_ratio={summary['tool_pass_ratio']:.4f}")
    return 0


def cmd_collect(args) -> int:
    # open first so an unwritable path fails before any model calls
    with open(args.out, "w", encoding="utf-8") as fh:
        tasks, _cfg, results = _run_all(args)
        kept = 0
        for task, res in zip(tasks, results):
            for traj in res.trajectories:
                correct = traj.answer is not None and is_correct(traj.answer, task.gold_answer, task.kind)
                if not (correct or args.keep_all):
                    continue
                rec = {"task_id": task.id, "sample_index": traj.plan.sample_index, "plan": traj.plan.plan_text,
                       "answer": traj.answer, "executable": traj.executable, "correct": correct,
                       "transcript": traj.transcript}
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
                kept += 1
    total = sum(len(r.trajectories) for r in results)
    if kept == 0:
        log.warning("no trajectories kept out of %d", total)
    print(f"kept {kept} of {total} trajectories")
    return 0


def cmd_verify(args) -> int:
    results = run_suites(args.seeds, args.suite or None)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"failing suites: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


# --- parser --------------------------------------------------------------

def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="task JSONL file")
    p.add_argument("--memory", help="memory bank file; omit to run without pruning")
    p.add_argument("--out", required=True)
    p.add_argument("--llm", required=True, help="endpoint URL or transcript:PATH")
    p.add_argument("--sandbox", default="process", help="'process' or stub:PATH")
    p.add_argument("--config", help="JSON file of agent settings; flags override it")
    p.add_argument("--n-samples", type=int)
    p.add_argument("--top-k", type=int)
    p.add_argument("--retention", type=float)
    p.add_argument("--conf-threshold", type=float)
    p.add_argument("--max-turns", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tabagent", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-memory", help="build a memory bank from a trajectory dump")
    p.add_argument("--dump", required=True, help="JSONL of {task_id, plan, answer, executable}")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dimension", type=int, default=256)
    p.set_defaults(func=cmd_build_memory)

    p = sub.add_parser("evaluate", help="solve every task and write a report")
    _run_flags(p)
    p.add_argument("--trace", help="also write per-task scoring and trajectory details here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("collect", help="run tasks and keep the trajectories that answer correctly")
    _run_flags(p)
    p.add_argument("--keep-all", action="store_true", help="keep incorrect trajectories too")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("verify", help="run the oracle self-check suites")
    p.add_argument("--seeds", type=int, default=200)
    p.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, DatasetError, BankError, LLMError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
