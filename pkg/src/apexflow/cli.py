"""``apexflow`` command line: train, sample, verify, eval, sweep.

Exit status is 0 on success, 1 when a check or run fails and 2 on usage or
config errors. Every output file is written to a temporary name first and
renamed into place.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import io
import json
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import checkpoint, verify
from .config import RunConfig, load_config
from .errors import CheckpointError, ConfigError, NumericFailure
from .metrics import nfe_gap
from .sampler import euler_sample
from .trainer import train

GRIDS = {
    "ab": [{"shift_a": a, "shift_b": b}
           for a in (-1.0, -0.5, 0.5) for b in (0.0, 0.1, 1.0, 10.0)],
    "pe": [{"lam_p": p, "lam_e": e}
           for p, e in ((1.0, 0.0), (0.0, 1.0), (1.0, 0.5), (1.0, 1.0), (1.0, 2.0))],
}
SWEEP_COLUMNS = ["cell", "shift_a", "shift_b", "lam_p", "lam_e", "nfe", "w2", "mean_err",
                 "var_err", "l_apex"]
EVAL_COLUMNS = ["nfe", "cond", "w2", "mean_err", "var_err"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(message)


def eval_rng(seed):
    """Stream for evaluation noise, independent of the three training streams."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(3,)))


def _write_text(path, text):
    checkpoint.write_atomic(path, text.encode("utf-8"))


def _csv_text(rows, columns):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.deterministic:
        changes["deterministic"] = True
    return cfg.replace(**changes) if changes else cfg


def _out(args, default="."):
    out = args.out or default
    os.makedirs(out, exist_ok=True)
    return out


def _load_model(args, cfg, out):
    path = args.checkpoint or os.path.join(out, "checkpoint.bin")
    return checkpoint.load(path, expect=cfg.arch())


def evaluate(field_for, cfg, nfes=None, n=None):
    """Rows of ``nfe_gap`` over all conditions with the config's eval stream."""
    dist = cfg.dist()
    rng = eval_rng(cfg.seed)
    rows = []
    for k in range(dist.n_conditions):
        rows += nfe_gap(field_for(k), dist, k, nfes or cfg.eval_nfe, n or cfg.eval_samples, rng)
    return rows


def cmd_train(args):
    cfg = _config(args)
    out = _out(args)
    _write_text(os.path.join(out, "config.json"),
                json.dumps(cfg.to_dict(), sort_keys=True, indent=1) + "\n")
    res = train(cfg, out_dir=out)
    print(f"trained {cfg.steps} steps: l_apex={res.final.l_apex:.6g}" if res.final
          else "trained 0 steps")
    return 0


def cmd_sample(args):
    cfg = _config(args)
    out = _out(args)
    model = _load_model(args, cfg, out)
    rng = eval_rng(cfg.seed)
    conds = range(cfg.dist().n_conditions) if args.cond is None else [args.cond]
    rows = []
    for k in conds:
        z = rng.standard_normal((args.n, model.arch.data_dim))
        x, _ = euler_sample(model.field(k), z, args.nfe, record=False)
        rows += [[k, *map(repr, p)] for p in x.tolist()]
    header = ["cond"] + [f"x{i}" for i in range(model.arch.data_dim)]
    _write_text(os.path.join(out, "samples.csv"),
                "\n".join(",".join(map(str, r)) for r in [header] + rows) + "\n")
    return 0


def cmd_verify(args):
    out = _out(args)
    reports = verify.run_all(args.seed or 0)
    _write_text(os.path.join(out, "verify.ndjson"),
                "".join(json.dumps(r.record()) + "\n" for r in reports))
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}")
    return 0 if all(r.passed for r in reports) else 1


def cmd_eval(args):
    cfg = _config(args)
    out = _out(args)
    if args.oracle:
        dist = cfg.dist()
        rows = evaluate(dist.field, cfg)
    else:
        model = _load_model(args, cfg, out)
        rows = evaluate(model.field, cfg)
    _write_text(os.path.join(out, "eval.csv"), _csv_text(rows, EVAL_COLUMNS))
    return 0


def cell_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def run_cell(cfg: RunConfig, cell_dir):
    """Train and evaluate one sweep cell; cached by config hash."""
    h = cell_hash(cfg)
    path = os.path.join(cell_dir, h + ".json")
    if os.path.exists(path):
        with open(path) as f:
            return json.load(f), True
    res = train(cfg)
    rows = evaluate(res.model.field, cfg, nfes=[1])
    row = {"cell": h, "shift_a": cfg.shift_a, "shift_b": cfg.shift_b, "lam_p": cfg.lam_p,
           "lam_e": cfg.lam_e, "nfe": 1,
           "w2": float(np.mean([r["w2"] for r in rows])),
           "mean_err": float(np.mean([r["mean_err"] for r in rows])),
           "var_err": float(np.mean([r["var_err"] for r in rows])),
           "l_apex": res.final.l_apex if res.final else float("nan")}
    _write_text(path, json.dumps(row, sort_keys=True) + "\n")
    return row, False


def sweep(cfg: RunConfig, grid, out):
    """One seeded training run per grid cell; rows in grid order."""
    if grid not in GRIDS:
        raise UsageError(f"unknown grid {grid!r}; choose from {sorted(GRIDS)}")
    cell_dir = os.path.join(out, "cells")
    os.makedirs(cell_dir, exist_ok=True)
    rows = []
    for change in GRIDS[grid]:
        row, cached = run_cell(cfg.replace(**change), cell_dir)
        print(f"{'cached' if cached else 'ran'} {row['cell']} {change}")
        rows.append(row)
    _write_text(os.path.join(out, "sweep.csv"), _csv_text(rows, SWEEP_COLUMNS))
    return rows


def cmd_sweep(args):
    if args.grid is None:
        raise UsageError("sweep needs --grid {ab,pe}")
    sweep(_config(args), args.grid, _out(args))
    return 0


def build_parser():
    p = _Parser(prog="apexflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--seed", type=int, metavar="U64")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--deterministic", action="store_true")
        return sp

    common(sub.add_parser("train", help="train a model")).set_defaults(fn=cmd_train)
    sp = common(sub.add_parser("sample", help="write samples.csv from a checkpoint"))
    sp.add_argument("--checkpoint", metavar="PATH")
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--nfe", type=int, default=1)
    sp.add_argument("--cond", type=int)
    sp.set_defaults(fn=cmd_sample)
    common(sub.add_parser("verify", help="run the identity checks")).set_defaults(fn=cmd_verify)
    sp = common(sub.add_parser("eval", help="write eval.csv over NFEs"))
    sp.add_argument("--checkpoint", metavar="PATH")
    sp.add_argument("--oracle", action="store_true", help="evaluate the exact data field")
    sp.set_defaults(fn=cmd_eval)
    sp = common(sub.add_parser("sweep", help="ablation grid"))
    sp.add_argument("--grid", choices=sorted(GRIDS))
    sp.set_defaults(fn=cmd_sweep)
    return p


def _thread_limit(deterministic):
    if deterministic:
        return threadpool_limits(1)
    env = os.environ.get("APEX_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"APEX_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise UsageError("APEX_THREADS must be >= 1")
        return threadpool_limits(n)
    return contextlib.nullcontext()


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        with _thread_limit(args.deterministic):
            return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericFailure, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())
