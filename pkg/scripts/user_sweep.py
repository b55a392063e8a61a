"""Total energy versus UEs per group (K = 2..10, N = 3, M = 100).

    python3 scripts/user_sweep.py --trials 20 --out users.csv
"""
import argparse
from pathlib import Path

from mimofl.harness import ExperimentSpec, run_experiment, summarize
from mimofl.model import SystemConfig

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=ROOT / "configs" / "default.json")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=2)
    ap.add_argument("--restarts", type=int, default=1)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="users.csv")
    args = ap.parse_args()
    spec = ExperimentSpec(SystemConfig.from_json(args.config), sweep_axis="K",
                          sweep_values=range(2, 11, 2), trials=args.trials, seed=args.seed,
                          out=args.out, restarts=args.restarts, workers=args.workers)
    rows = run_experiment(spec)
    print(summarize(rows).format())


if __name__ == "__main__":
    main()
