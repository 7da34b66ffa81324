"""Seeded training loop for the combined fake-flow and mixed-consistency objective."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass

import numpy as np

from . import checkpoint
from .errors import NumericFailure
from .losses import l_apex, l_fm
from .net import VelocityModel
from .paths import interpolate

log = logging.getLogger(__name__)


class Adam:
    """Adam with bias correction (Kingma & Ba)."""

    def __init__(self, n, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.k = 0

    def step(self, params, g):
        self.k += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        m_hat = self.m / (1 - self.beta1 ** self.k)
        v_hat = self.v / (1 - self.beta2 ** self.k)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SGD:
    def __init__(self, n, lr=1e-3, **_):
        self.lr = lr

    def step(self, params, g):
        return params - self.lr * g


def make_optimizer(cfg, n):
    if cfg.optimizer == "adam":
        return Adam(n, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    return SGD(n, cfg.lr)


def rng_streams(seed):
    """Independent generators for init, data and fake-branch noise."""
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def draw_batch(dist, n, rng, t_min, t_max):
    cond = rng.integers(dist.n_conditions, size=n)
    x = np.empty((n, dist.dim))
    for k in range(dist.n_conditions):
        idx = np.flatnonzero(cond == k)
        if idx.size:
            x[idx] = dist.sample_x(k, idx.size, rng)
    z = rng.standard_normal((n, dist.dim))
    t = rng.uniform(t_min, t_max, size=n)
    return interpolate(x, z, t), cond


@dataclass
class TrainResult:
    model: VelocityModel
    final: object          # last LossReport
    metrics_path: str | None
    checkpoint_path: str | None


def train(cfg, out_dir=None, log_every=1, on_step=None):
    """Run ``cfg.steps`` optimiser steps on ``lam_p l_fake + lam_e l_mix``.

    With ``out_dir`` set, writes ``metrics.ndjson`` (one record per logged
    step) and ``checkpoint.bin``. Both appear only once complete.
    """
    dist = cfg.dist()
    init_rng, data_rng, fake_rng = rng_streams(cfg.seed)
    model = VelocityModel.init(cfg.arch(), init_rng)
    opt = make_optimizer(cfg, model.params.size)
    shift, weights = cfg.shift(), cfg.weights()
    t_range = (cfg.t_min, cfg.t_max)

    metrics_path = ckpt_path = None
    fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = os.path.join(out_dir, "metrics.ndjson")
        ckpt_path = os.path.join(out_dir, "checkpoint.bin")
        fh = open(metrics_path + ".partial", "w")

    report = None
    t0 = time.perf_counter()
    try:
        for step in range(cfg.steps):
            pp, cond = draw_batch(dist, cfg.batch_size, data_rng, *t_range)
            report = l_apex(model, pp, cond, shift, weights, fake_rng,
                            reuse_noise=cfg.fake_reuse_noise, t_range=t_range)
            if step < cfg.pretrain_steps:
                # warm start: plain flow matching, other terms logged only
                _, report.grad = l_fm(model, pp, cond, with_grad=True)
            if not (np.isfinite(report.l_apex) and np.all(np.isfinite(report.grad))):
                raise NumericFailure(f"non-finite loss or gradient at step {step}")
            model.params = opt.step(model.params, report.grad)
            if on_step is not None:
                on_step(step, report)
            if fh is not None and (step % log_every == 0 or step == cfg.steps - 1):
                wall = None if cfg.deterministic else round(1e3 * (time.perf_counter() - t0), 3)
                fh.write(json.dumps(report.record(step, wall)) + "\n")
    except NumericFailure:
        log.error("numeric failure; keeping last good parameters")
        if ckpt_path is not None:
            checkpoint.save(model, ckpt_path)
        raise
    finally:
        if fh is not None:
            fh.close()

    if out_dir is not None:
        os.replace(metrics_path + ".partial", metrics_path)
        checkpoint.save(model, ckpt_path)
    return TrainResult(model, report, metrics_path, ckpt_path)
