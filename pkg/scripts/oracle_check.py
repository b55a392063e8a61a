"""SCA against the brute-force grid oracle on tiny instances (N=1, K in {1, 2}, M=50).

Prints one line per (instance, scheme) with the oracle bracket
[oracle * (1 - rel. grid error), oracle * 1.02] and whether SCA lands in it.
"""
import argparse

from mimofl.harness import grid_oracle
from mimofl.model import SystemConfig, generate_network
from mimofl.optimizer import ScaOptions, sca_solve


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--instances", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--restarts", type=int, default=1)
    args = ap.parse_args()
    n_bad = 0
    for i in range(args.instances):
        K = 1 + i % 2
        cfg = SystemConfig.default_scenario(M=50, N=1, K=K)
        ch = generate_network(cfg, args.seed + i)
        for scheme in ("async", "sync"):
            orc = grid_oracle(ch, cfg, scheme)
            res = sca_solve(ch, cfg, scheme, ScaOptions(restarts=args.restarts))
            lo, hi = orc.E_total - orc.error_bound, orc.E_total * 1.02
            ok = lo <= res.E_total <= hi
            n_bad += not ok
            print(f"seed={args.seed + i} K={K} {scheme:5s} oracle={orc.E_total:.6f} "
                  f"bracket=[{lo:.6f}, {hi:.6f}] sca={res.E_total:.6f} ({res.status}) {'ok' if ok else 'OUT'}")
    print(f"{n_bad} outside the bracket")


if __name__ == "__main__":
    main()
