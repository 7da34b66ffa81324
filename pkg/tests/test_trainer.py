import json

import numpy as np
import pytest

from apexflow import checkpoint, trainer
from apexflow.config import RunConfig
from apexflow.errors import NumericFailure
from apexflow.losses import l_apex
from apexflow.net import VelocityModel
from apexflow.trainer import Adam, draw_batch, rng_streams, train

SMALL = dict(hidden=[16, 16], batch_size=16, steps=20)


def test_zero_objective_keeps_params():
    cfg = RunConfig(lam_p=0.0, lam_e=0.0, **SMALL)
    init = VelocityModel.init(cfg.arch(), rng_streams(cfg.seed)[0])
    res = train(cfg)
    assert res.model.params.tobytes() == init.params.tobytes()


def test_first_adam_step_replay():
    cfg = RunConfig(**{**SMALL, "steps": 1})
    init_rng, data_rng, fake_rng = rng_streams(cfg.seed)
    m = VelocityModel.init(cfg.arch(), init_rng)
    pp, cond = draw_batch(cfg.dist(), cfg.batch_size, data_rng, cfg.t_min, cfg.t_max)
    g = l_apex(m, pp, cond, cfg.shift(), cfg.weights(), fake_rng).grad
    m_hat = (1 - cfg.beta1) * g / (1 - cfg.beta1)
    v_hat = (1 - cfg.beta2) * g * g / (1 - cfg.beta2)
    expect = m.params - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    np.testing.assert_array_equal(train(cfg).model.params, expect)


def test_adam_bias_correction():
    opt = Adam(1, lr=0.1)
    p = opt.step(np.array([0.0]), np.array([2.0]))
    assert p[0] == pytest.approx(-0.1, rel=1e-7)


def test_same_seed_identical_bytes(tmp_path):
    cfg = RunConfig(**SMALL)
    a, b = train(cfg, tmp_path / "a"), train(cfg, tmp_path / "b")
    for name in ("metrics.ndjson", "checkpoint.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    c = train(cfg.replace(seed=1), tmp_path / "c")
    assert (tmp_path / "c" / "checkpoint.bin").read_bytes() != (tmp_path / "a" / "checkpoint.bin").read_bytes()
    assert sorted(p.name for p in (tmp_path / "a").iterdir()) == ["checkpoint.bin", "metrics.ndjson"]


def test_metrics_records(tmp_path):
    train(RunConfig(**SMALL), tmp_path)
    recs = [json.loads(line) for line in (tmp_path / "metrics.ndjson").read_text().splitlines()]
    assert [r["step"] for r in recs] == list(range(20))
    for r in recs:
        assert abs(r["l_apex"] - (r["l_fake"] + r["l_mix"])) < 1e-12
        assert r["wallclock_ms"] is None


def test_wallclock_when_not_deterministic(tmp_path):
    train(RunConfig(deterministic=False, **SMALL), tmp_path)
    last = json.loads((tmp_path / "metrics.ndjson").read_text().splitlines()[-1])
    assert last["wallclock_ms"] >= 0


def test_draw_batch():
    d = RunConfig().dist()
    pp, cond = draw_batch(d, 2000, np.random.default_rng(0), 0.01, 0.99)
    assert pp.t.min() >= 0.01 and pp.t.max() <= 0.99
    assert 0.45 < cond.mean() < 0.55
    assert np.all(np.sign(pp.x[:, 0]) == np.where(cond == 0, 1, -1))


def test_numeric_failure_keeps_last_good(tmp_path, monkeypatch):
    real = trainer.l_apex
    calls = []

    def flaky(*a, **k):
        rep = real(*a, **k)
        calls.append(1)
        if len(calls) == 4:
            rep.l_apex = float("nan")
        return rep

    monkeypatch.setattr(trainer, "l_apex", flaky)
    with pytest.raises(NumericFailure, match="step 3"):
        train(RunConfig(**SMALL), tmp_path)
    saved = checkpoint.load(tmp_path / "checkpoint.bin")
    monkeypatch.setattr(trainer, "l_apex", real)
    ref = train(RunConfig(**{**SMALL, "steps": 3}))
    assert saved.params.tobytes() == ref.model.params.tobytes()
    assert not (tmp_path / "metrics.ndjson").exists()


def test_smoothed_l_mix_decreases():
    vals = []
    train(RunConfig(steps=2000), on_step=lambda s, r: vals.append(r.l_mix))
    ema, s = [], vals[0]
    for v in vals:
        s = 0.98 * s + 0.02 * v
        ema.append(s)
    k = len(ema) // 10
    assert np.mean(ema[-k:]) < np.mean(ema[:k])
