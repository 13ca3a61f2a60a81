"""Synthetic check that contrastive pruning raises the share of correct candidates.

    python3 scripts/run_pruning_benefit.py --seeds 200 --retention 0.5
"""

import argparse
import statistics

from tabagent.synthetic import run_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=200)
    ap.add_argument("--retention", type=float, default=0.5)
    ap.add_argument("--candidates", type=int, default=16)
    args = ap.parse_args()
    trials = [run_trial(s, args.candidates, retention_ratio=args.retention) for s in range(args.seeds)]
    helped = sum(t.helped for t in trials)
    print(f"seeds={args.seeds} helped={helped} ({helped / len(trials):.1%})")
    print(f"mean correct fraction before={statistics.fmean(t.before for t in trials):.3f} "
          f"after={statistics.fmean(t.after for t in trials):.3f}")


if __name__ == "__main__":
    main()
