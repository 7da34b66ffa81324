"""Train on the two-Gaussian toy task and print the NFE table.

    python3 scripts/run_toy.py --out runs/toy [--steps 20000] [--reuse-noise]
"""

import argparse
import time

from apexflow import cli
from apexflow.config import RunConfig
from apexflow.trainer import train


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="runs/toy")
    p.add_argument("--steps", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reuse-noise", action="store_true")
    p.add_argument("--pretrain", type=int, default=0, help="plain flow-matching warm-up steps")
    args = p.parse_args()

    cfg = RunConfig(steps=args.steps, seed=args.seed, fake_reuse_noise=args.reuse_noise,
                    pretrain_steps=args.pretrain)
    t0 = time.perf_counter()
    res = train(cfg, args.out, log_every=100)
    print(f"trained {cfg.steps} steps in {time.perf_counter() - t0:.1f}s")

    oracle_rows = cli.evaluate(cfg.dist().field, cfg)
    model_rows = cli.evaluate(res.model.field, cfg)
    print(f"{'nfe':>4} {'cond':>4} {'w2 model':>10} {'w2 exact':>10} {'mean_err':>9} {'var_err':>8}")
    for m, o in zip(model_rows, oracle_rows):
        print(f"{m['nfe']:4d} {m['cond']:4d} {m['w2']:10.4f} {o['w2']:10.4f} "
              f"{m['mean_err']:9.4f} {m['var_err']:8.4f}")


if __name__ == "__main__":
    main()
