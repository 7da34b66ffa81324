"""Acceptance suite: one test per criterion, each printing a pass/fail line."""

import csv
import os
import time

import numpy as np

from apexflow import cli, verify
from apexflow.config import RunConfig
from apexflow.losses import fake_velocity, g_apex, l_mix, l_sup, mix_terms, sup_terms, cons_terms
from apexflow.metrics import moment_report, nfe_gap, sample_w2
from apexflow.net import ShiftSpec
from apexflow.oracle import OracleDist
from apexflow.sampler import one_step_sample
from apexflow.trainer import train

from helpers import batch, hand_1d, linear_1d, small_model, toy_dist


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def test_c01_duality(criterion):
    rep, secs = timed(verify.check_duality)
    ok = rep.metrics["max_abs_err"] < 1e-8 and secs < 5
    assert criterion(1, ok, f"max_abs_err={rep.metrics['max_abs_err']:.2e} in {secs:.2f}s")


def test_c02_identities(criterion):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    cor = verify.check_corollary(rng, n_cases=10_000)
    end = verify.check_endpoint_equiv(rng, n_cases=10_000)
    secs = time.perf_counter() - t0
    worst = max(cor.metrics["max_rel_err"], end.metrics["max_rel_err_sup"],
                end.metrics["max_rel_err_fake"])
    assert criterion(2, worst < 1e-12 and secs < 5, f"max_rel_err={worst:.2e} in {secs:.2f}s")


def test_c03_grad_equivalence(criterion):
    rep, secs = timed(verify.check_grad_equiv, hidden=(88, 88), batch_size=64)
    m = rep.metrics
    ok = (9_000 <= m["n_params"] <= 11_000 and m["rel_l2_diff"] < 1e-8
          and m["fd_params"] <= 200 and m["fd_max_rel_err_l_mix"] < 1e-4
          and m["fd_max_rel_err_g_apex"] < 1e-4 and secs < 30)
    assert criterion(3, ok, f"rel_diff={m['rel_l2_diff']:.2e} on {m['n_params']} params, "
                            f"fd_err={max(m['fd_max_rel_err_l_mix'], m['fd_max_rel_err_g_apex']):.2e} "
                            f"on {m['fd_params']} params, {secs:.2f}s")


def test_c04_hand_gradient(criterion):
    pp, cond = hand_1d()
    model = linear_1d(0.0)          # F = theta, the bias; theta = 0
    v_fake = np.zeros((1, 1))
    shift = ShiftSpec(0.0, 0.0)
    lm, gm = l_mix(model, pp, cond, shift, 0.5, v_fake=v_fake, with_grad=True)
    lg, gg = g_apex(model, pp, cond, shift, 0.5, v_fake=v_fake, with_grad=True)
    vals = np.array([lm, lg, gm[-1], gg[-1]])
    ok = np.allclose(vals, [0.25, 0.5, 0.5, 0.5], rtol=0, atol=1e-14)
    assert criterion(4, ok, f"l_mix={lm:g} g_apex={lg:g} dl_mix={gm[-1]:g} dg_apex={gg[-1]:g}")


def test_c05_kl_descent(criterion):
    rep, secs = timed(verify.check_kl_descent, np.random.default_rng(5), n=100_000)
    cos = rep.metrics["cosine"]
    assert criterion(5, cos > 0.99 and secs < 30, f"cosine={cos:.6f} in {secs:.2f}s")


def test_c06_constant_weight(criterion):
    rep = verify.check_gan_alignment(np.random.default_rng(6), n=100_000)
    m = rep.metrics
    ok = m["ratio_rel_var"] < 1e-10 and m["cosine"] > 0.95
    assert criterion(6, ok, f"ratio={m['ratio_mean']:.12f} (expect {m['expected_ratio']}) "
                            f"rel_var={m['ratio_rel_var']:.2e} cosine={m['cosine']:.6f}")


def test_c07_lambda_zero(criterion):
    worst = 0.0
    shift = ShiftSpec(-0.5, 1.0)
    for seed in range(10):
        model = small_model(seed=seed, hidden=(32, 32))
        pp, cond = batch(toy_dist(), 128, seed)
        F = model.forward(pp.x_t, pp.t, model.embed(cond))
        v_fake = fake_velocity(model, pp, cond, shift)
        mix = mix_terms(F, v_fake, pp, 0.0)
        sup = sup_terms(F, pp, "endpoint")
        gap = (1.0 - 0.0) * sup_terms(F, pp) + 0.0 * cons_terms(F, v_fake, pp)
        for other in (sup, gap):
            worst = max(worst, float(np.max(np.abs(mix - other) / np.abs(mix))))
        scal = [l_mix(model, pp, cond, shift, 0.0), l_sup(model, pp, cond),
                g_apex(model, pp, cond, shift, 0.0)]
        worst = max(worst, (max(scal) - min(scal)) / max(scal))
    assert criterion(7, worst < 1e-12, f"max per-sample rel diff={worst:.2e}")


def test_c08_toy_training(criterion, tmp_path):
    cfg = RunConfig()
    assert (cfg.steps, cfg.batch_size, cfg.shift_a, cfg.shift_b, cfg.lam_p, cfg.lam_e,
            cfg.lam) == (20_000, 128, -0.5, 1.0, 1.0, 1.0, 0.5)
    res, secs = timed(train, cfg, tmp_path / "a")
    train(cfg, tmp_path / "b")
    identical = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
                    for f in ("metrics.ndjson", "checkpoint.bin"))
    dist = cfg.dist()
    rng = cli.eval_rng(cfg.seed)
    parts, quality = [], True
    for k in range(dist.n_conditions):
        x = one_step_sample(res.model.field(k), rng.standard_normal((cfg.eval_samples, 2)))
        err, w2 = moment_report(x, dist, k).mean_err, sample_w2(x, dist, k)
        quality &= err < 0.1 and w2 < 0.05
        parts.append(f"c{k}: mean_err={err:.3f} w2={w2:.3f}")
    ok = quality and secs < 300 and identical
    assert criterion(8, ok, f"{'; '.join(parts)}; {secs:.0f}s; identical={identical}")


def test_c09_nfe_gap(criterion):
    dist, n = toy_dist(), 10_000
    nfes = [1, 2, 5, 20, 50]
    # three standard errors of an isotropic variance estimate, per coordinate sum
    tol = 3 * dist.dim * dist.variance(0) * np.sqrt(2.0 / n)
    mono, w2s = True, []
    for k in range(dist.n_conditions):
        w2 = [r["w2"] for r in nfe_gap(dist.field(k), dist, k, nfes, n, np.random.default_rng(k))]
        mono &= all(b <= a + tol for a, b in zip(w2, w2[1:]))
        w2s.append(w2)
    delta = OracleDist.gaussians([(1.0, -1.0)], 1e-12)
    w2_delta = nfe_gap(delta.field(0), delta, 0, [1], n, np.random.default_rng(9))[0]["w2"]
    ok = mono and w2_delta < 1e-8
    assert criterion(9, ok, f"w2 c0={np.round(w2s[0], 4).tolist()} delta_w2={w2_delta:.1e}")


def sweep_rows(out, grid, cfg_path):
    assert cli.run(["sweep", "--grid", grid, "--config", cfg_path, "--seed", "3",
                    "--out", str(out)]) == 0
    with open(os.path.join(out, "sweep.csv")) as f:
        return list(csv.DictReader(f)), open(os.path.join(out, "sweep.csv"), "rb").read()


def test_c10_sweeps(criterion, tmp_path):
    cfg_path = tmp_path / "short.toml"
    cfg_path.write_text("version = 1\nsteps = 25\nbatch_size = 16\nhidden = [16, 16]\n"
                        "eval_samples = 500\n")
    pe, pe_bytes = sweep_rows(tmp_path / "pe", "pe", str(cfg_path))
    ab, ab_bytes = sweep_rows(tmp_path / "ab", "ab", str(cfg_path))
    _, pe_again = sweep_rows(tmp_path / "pe2", "pe", str(cfg_path))
    _, ab_again = sweep_rows(tmp_path / "ab2", "ab", str(cfg_path))
    pe_cells = [(float(r["lam_p"]), float(r["lam_e"])) for r in pe]
    ab_cells = [(float(r["shift_a"]), float(r["shift_b"])) for r in ab]
    ok = (pe_cells == [(1.0, 0.0), (0.0, 1.0), (1.0, 0.5), (1.0, 1.0), (1.0, 2.0)]
          and ab_cells == [(a, b) for a in (-1.0, -0.5, 0.5) for b in (0.0, 0.1, 1.0, 10.0)]
          and pe_bytes == pe_again and ab_bytes == ab_again)
    assert criterion(10, ok, f"pe rows={len(pe)} ab rows={len(ab)} "
                             f"deterministic={pe_bytes == pe_again and ab_bytes == ab_again}")
