"""Run every identity check and print a one-line summary per check."""

import sys

from apexflow.verify import run_all


def main(seed=0):
    ok = True
    for rep in run_all(seed):
        ok &= rep.passed
        keys = [k for k in rep.metrics if k.startswith(("max", "rel", "cos", "weight"))]
        detail = " ".join(f"{k}={rep.metrics[k]:.3g}" for k in keys)
        print(f"{'PASS' if rep.passed else 'FAIL'} {rep.name:15s} {detail}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main(int(sys.argv[1]) if len(sys.argv) > 1 else 0))
