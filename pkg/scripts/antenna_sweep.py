"""Total energy versus BS antenna count (M = 50..150), all four schemes.

    python3 scripts/antenna_sweep.py --trials 20 --out results/antennas.csv
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
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--restarts", type=int, default=1)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="antennas.csv")
    args = ap.parse_args()
    spec = ExperimentSpec(SystemConfig.from_json(args.config), sweep_axis="M",
                          sweep_values=range(50, 151, 25), trials=args.trials, seed=args.seed,
                          out=args.out, restarts=args.restarts, workers=args.workers)
    rows = run_experiment(spec)
    print(summarize(rows).format())


if __name__ == "__main__":
    main()
