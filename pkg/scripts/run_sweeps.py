"""Run both ablation grids at a chosen step budget and print the tables.

    python3 scripts/run_sweeps.py --out runs/sweeps --steps 5000
"""

import argparse
import os

from apexflow import cli
from apexflow.config import RunConfig


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="runs/sweeps")
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    cfg = RunConfig(steps=args.steps, seed=args.seed)
    for grid in ("pe", "ab"):
        rows = cli.sweep(cfg, grid, os.path.join(args.out, grid))
        keys = ("lam_p", "lam_e") if grid == "pe" else ("shift_a", "shift_b")
        print(f"\n{grid}: {keys[0]:>7} {keys[1]:>7} {'w2':>8} {'mean_err':>9} {'var_err':>8}")
        for r in rows:
            print(f"    {r[keys[0]]:7.2f} {r[keys[1]]:7.2f} {r['w2']:8.4f} {r['mean_err']:9.4f} "
                  f"{r['var_err']:8.4f}")


if __name__ == "__main__":
    main()
