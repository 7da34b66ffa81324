"""Numerical certification of the score/velocity and gradient identities.

Each ``check_*`` function is self-contained, takes its own generator and
returns a :class:`CheckReport`. Algebraic identities use tight absolute
tolerances; Monte-Carlo statements use cosine thresholds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .losses import (fake_velocity, fake_trajectory_points, g_apex, l_mix, fisher_estimate,
                     T_MIN, T_MAX)
from .net import Architecture, ShiftSpec, VelocityModel, check_finite_diff, shift_condition
from .oracle import Component, OracleDist
from .paths import endpoint_predict, interpolate, omega, velocity_to_score

DUALITY_TOL = 1e-8
IDENTITY_TOL = 1e-12
GRAD_EQUIV_TOL = 1e-8
FD_TOL = 1e-4
KL_COSINE = 0.99
GAN_COSINE = 0.95
RATIO_VAR_TOL = 1e-10


@dataclass
class CheckReport:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    note: str = ""
    seconds: float = 0.0

    def record(self):
        return {"check": self.name, "pass": bool(self.passed), "seconds": round(self.seconds, 3),
                "note": self.note, **{k: _jsonable(v) for k, v in self.metrics.items()}}


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        rep = fn(*args, **kwargs)
        rep.seconds = time.perf_counter() - t0
        return rep
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _cosine(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return float("nan")
    return float(a @ b / (na * nb))


def default_gaussians():
    return OracleDist.gaussians([(0.0, 0.0), (1.0, -0.5), (-2.0, 3.0)], [1.0, 0.7, 0.25])


@_timed
def check_duality(dist=None, times=None, lattice=None):
    """Score from the optimal velocity vs the closed-form marginal score."""
    dist = default_gaussians() if dist is None else dist
    times = np.linspace(0.05, 0.95, 19) if times is None else np.asarray(times)
    if lattice is None:
        g = np.linspace(-4.0, 4.0, 17)
        lattice = np.stack(np.meshgrid(*([g] * dist.dim)), -1).reshape(-1, dist.dim) \
            if dist.dim <= 3 else np.random.default_rng(0).uniform(-4, 4, (4096, dist.dim))
    worst = 0.0
    for cond in range(dist.n_conditions):
        for t in times:
            s_from_v = velocity_to_score(dist.optimal_velocity(cond, lattice, t), lattice, t)
            s = dist.marginal_score(cond, lattice, t)
            worst = max(worst, float(np.max(np.abs(s_from_v - s))))
    return CheckReport("duality", worst < DUALITY_TOL,
                       {"max_abs_err": worst, "n_points": len(lattice) * len(times)
                        * dist.n_conditions, "tol": DUALITY_TOL})


def _rand_t(rng, n):
    return rng.uniform(T_MIN, T_MAX, size=n)


@_timed
def check_corollary(rng, n_cases=10_000, dim=4):
    """``v1 - v2 == -omega(t) (s1 - s2)`` on random inputs.

    Errors are measured relative to the input scale ``|v1| + |v2| + |x_t|``.
    """
    v1, v2, x_t = (rng.standard_normal((n_cases, dim)) for _ in range(3))
    t = _rand_t(rng, n_cases)
    s1 = velocity_to_score(v1, x_t, t)
    s2 = velocity_to_score(v2, x_t, t)
    lhs = v1 - v2
    rhs = -omega(t)[:, None] * (s1 - s2)
    scale = np.linalg.norm(v1, axis=1) + np.linalg.norm(v2, axis=1) + np.linalg.norm(x_t, axis=1)
    rel = np.linalg.norm(lhs - rhs, axis=1) / scale
    worst = float(np.max(rel))
    return CheckReport("corollary", worst < IDENTITY_TOL,
                       {"max_rel_err": worst, "n_cases": n_cases, "tol": IDENTITY_TOL})


@_timed
def check_endpoint_equiv(rng, n_cases=10_000, dim=4):
    """Endpoint-space and ``t^2``-scaled velocity-space errors agree.

    Errors are relative to ``t^2 (|F| + |v|)^2``, the size of the squared
    terms before cancellation.
    """
    x, z, F, v_fake = (rng.standard_normal((n_cases, dim)) for _ in range(4))
    t = _rand_t(rng, n_cases)
    pp = interpolate(x, z, t)
    t2 = t ** 2
    nF = np.linalg.norm(F, axis=1)

    ep = endpoint_predict(F, pp.x_t, t)
    lhs_sup = np.sum((ep - x) ** 2, axis=1)
    rhs_sup = t2 * np.sum((F - pp.v_data) ** 2, axis=1)
    scale_sup = t2 * (nF + np.linalg.norm(pp.v_data, axis=1)) ** 2
    rel_sup = float(np.max(np.abs(lhs_sup - rhs_sup) / scale_sup))

    lhs_fake = np.sum((ep - endpoint_predict(v_fake, pp.x_t, t)) ** 2, axis=1)
    rhs_fake = t2 * np.sum((F - v_fake) ** 2, axis=1)
    scale_fake = t2 * (nF + np.linalg.norm(v_fake, axis=1)) ** 2
    rel_fake = float(np.max(np.abs(lhs_fake - rhs_fake) / scale_fake))

    ok = rel_sup < IDENTITY_TOL and rel_fake < IDENTITY_TOL
    return CheckReport("endpoint_equiv", ok, {"max_rel_err_sup": rel_sup,
                                              "max_rel_err_fake": rel_fake,
                                              "n_cases": n_cases, "tol": IDENTITY_TOL})


def toy_dist():
    return OracleDist.gaussians([(2.0, 0.0), (-2.0, 0.0)], 0.5)


def random_batch(dist, n, rng, t_range=(T_MIN, T_MAX)):
    cond = rng.integers(dist.n_conditions, size=n)
    x = np.concatenate([dist.sample_x(int(k), 1, rng) for k in cond])
    z = rng.standard_normal(x.shape)
    return interpolate(x, z, rng.uniform(*t_range, size=n)), cond


def _frozen(loss_fn, v_fake, **kw):
    def loss(model, batch):
        pp, cond = batch
        return loss_fn(model, pp, cond, v_fake=v_fake, with_grad=True, **kw)
    return loss


@_timed
def check_grad_equiv(model_seed=0, batch_seed=1, lam=0.5, shift=ShiftSpec(-0.5, 1.0),
                     hidden=(88, 88), batch_size=64, fd_hidden=(10,), fd_batch=8):
    """Mixed consistency loss and its two-term form share one gradient."""
    dist = toy_dist()
    arch = Architecture(data_dim=2, n_conditions=2, embed_dim=4, hidden=hidden)
    model = VelocityModel.init(arch, np.random.default_rng(model_seed))
    pp, cond = random_batch(dist, batch_size, np.random.default_rng(batch_seed))
    v_fake = fake_velocity(model, pp, cond, shift)
    lm, g_mix = l_mix(model, pp, cond, shift, lam, v_fake=v_fake, with_grad=True)
    lg, g_g = g_apex(model, pp, cond, shift, lam, v_fake=v_fake, with_grad=True)
    rel = float(np.linalg.norm(g_mix - g_g) / np.linalg.norm(g_g))

    small = Architecture(data_dim=2, n_conditions=2, embed_dim=2, hidden=fd_hidden,
                         time_features=2)
    sm = VelocityModel.init(small, np.random.default_rng(model_seed + 1))
    spp, scond = random_batch(dist, fd_batch, np.random.default_rng(batch_seed + 1))
    sv = fake_velocity(sm, spp, scond, shift)
    fd_mix = check_finite_diff(sm, _frozen(l_mix, sv, shift=shift, lam=lam), (spp, scond),
                               tol=FD_TOL)
    fd_g = check_finite_diff(sm, _frozen(g_apex, sv, shift=shift, lam=lam), (spp, scond),
                             tol=FD_TOL)
    ok = rel < GRAD_EQUIV_TOL and fd_mix.passed and fd_g.passed
    return CheckReport("grad_equiv", ok, {
        "rel_l2_diff": rel, "n_params": arch.n_params, "batch_size": batch_size,
        "l_mix": lm, "g_apex": lg, "fd_params": small.n_params,
        "fd_max_rel_err_l_mix": fd_mix.max_rel_err, "fd_max_rel_err_g_apex": fd_g.max_rel_err,
        "tol": GRAD_EQUIV_TOL, "fd_tol": FD_TOL})


def kl_velocity_gradient(theta, mu_star, n, rng, t_range=(T_MIN, T_MAX)):
    """Velocity-space KL gradient for the shift model ``x = z + theta``.

    Uses exact conditional-mean velocities of ``N(theta, I)`` and
    ``N(mu_star, I)`` and the path Jacobian ``dx_t/dtheta = (1 - t) I``.
    Returns per-sample contributions ``(n, d)``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    d = theta.size
    p_fake = OracleDist((( Component(1.0, tuple(theta), 1.0),),))
    p_real = OracleDist(((Component(1.0, tuple(mu_star), 1.0),),))
    x0 = theta + rng.standard_normal((n, d))
    z = rng.standard_normal((n, d))
    t = rng.uniform(*t_range, size=n)
    x_t = interpolate(x0, z, t).x_t
    dv = p_fake.optimal_velocity(0, x_t, t) - p_real.optimal_velocity(0, x_t, t)
    return -(1.0 / omega(t))[:, None] * dv * (1.0 - t)[:, None]


@_timed
def check_kl_descent(rng, n=100_000, theta=(1.0, 0.0), mu_star=(0.0, 0.0)):
    """Velocity-space KL gradient points along the analytic ``theta - mu_star``."""
    theta = np.asarray(theta, dtype=np.float64)
    mu_star = np.asarray(mu_star, dtype=np.float64)
    target = theta - mu_star
    contrib = kl_velocity_gradient(theta, mu_star, n, rng)
    est = contrib.mean(axis=0)
    se = float(np.linalg.norm(contrib.std(axis=0)) / np.sqrt(n))
    # reparameterisation form at t=0: scores of N(theta, I) and N(mu*, I) at x = z + theta
    x = theta + rng.standard_normal((n, theta.size))
    reparam = np.mean(-(x - theta) + (x - mu_star), axis=0)
    reparam_err = float(np.linalg.norm(reparam - target) / max(np.linalg.norm(target), 1e-300))
    metrics = {"estimate": est, "analytic": target, "std_err": se,
               "estimate_norm": float(np.linalg.norm(est)), "reparam_rel_err": reparam_err, "n": n}
    if np.linalg.norm(target) < 1e-6:
        return CheckReport("kl_descent", bool(np.linalg.norm(est) <= 3 * se + 1e-12),
                           metrics, note="theta == mu*: cosine skipped, norm vs noise floor")
    cos = _cosine(est, target)
    metrics["cosine"] = cos
    return CheckReport("kl_descent", cos > KL_COSINE, metrics)


def velocity_combo(F, v_data, v_fake, lam):
    return (1.0 - lam) * (F - v_data) + lam * (F - v_fake)


@_timed
def check_gan_alignment(rng, model=None, dist=None, cond=0, shift=ShiftSpec(-0.5, 1.0),
                        lam=0.5, n=100_000, t_fixed=0.5):
    """Score-difference form of the two-term gradient with a constant weight.

    (ii) On the model's own trajectory at fixed ``t``, the velocity
    combination equals ``-t/(1-t)`` times ``s_theta - s_mix`` sample by
    sample (oracle conditional-mean velocity and score on the data side).
    (i) On matched real-pair samples, ``grad g_apex`` and the Monte-Carlo
    score-form expectation point the same way.
    """
    dist = toy_dist() if dist is None else dist
    if model is None:
        arch = Architecture(data_dim=dist.dim, n_conditions=dist.n_conditions, hidden=(32, 32))
        model = VelocityModel.init(arch, rng)
    c = model.embed(cond)
    c_fake = shift_condition(c, shift)
    expected = -t_fixed / (1.0 - t_fixed)

    # (ii) per-sample ratio at fixed t on generated trajectory points
    x_t, _ = fake_trajectory_points(model, dist, cond, min(n, 20_000), rng)
    t = np.full(len(x_t), t_fixed)
    F = model.forward(x_t, t, c)
    v_f = model.forward(x_t, t, c_fake)
    v_d = dist.optimal_velocity(cond, x_t, t)
    combo = velocity_combo(F, v_d, v_f, lam)
    s_theta = velocity_to_score(F, x_t, t)
    s_mix = (1 - lam) * dist.marginal_score(cond, x_t, t) + lam * velocity_to_score(v_f, x_t, t)
    sdiff = s_theta - s_mix
    nrm = np.sum(sdiff ** 2, axis=1)
    metrics = {"t": t_fixed, "expected_ratio": expected}
    if np.max(nrm) == 0.0:
        metrics.update(weight_variance=0.0, combo_norm=float(np.max(np.abs(combo))))
        ok_ratio = bool(np.max(np.abs(combo)) < 1e-12)
        note = "score difference identically zero"
    else:
        keep = nrm > 1e-20 * np.max(nrm)
        ratio = np.sum(combo[keep] * sdiff[keep], axis=1) / nrm[keep]
        weights = ratio / expected      # implied per-sample weight, should be 1
        wvar = float(np.var(weights))
        elem = float(np.max(np.abs(combo - expected * sdiff)) / np.max(np.abs(combo)))
        metrics.update(ratio_mean=float(ratio.mean()), weight_variance=wvar,
                       ratio_rel_var=float(np.var(ratio) / ratio.mean() ** 2),
                       elementwise_rel_err=elem)
        ok_ratio = wvar < RATIO_VAR_TOL and abs(ratio.mean() / expected - 1.0) < 1e-10
        note = ""

    # (i) matched-sample Monte-Carlo cosine on real pairs
    x, z = dist.sample_pair(cond, rng, n)
    pp = interpolate(x, z, rng.uniform(T_MIN, T_MAX, size=n))
    conds = np.full(n, cond)
    v_fake = fake_velocity(model, pp, conds, shift)
    _, g_direct = g_apex(model, pp, conds, shift, lam, v_fake=v_fake, with_grad=True)
    F, cache = model.forward(pp.x_t, pp.t, c, keep=True)
    s_mix = ((1 - lam) * dist.marginal_score(cond, pp.x_t, pp.t)
             + lam * velocity_to_score(v_fake, pp.x_t, pp.t))
    sdiff = velocity_to_score(F, pp.x_t, pp.t) - s_mix
    tt = pp.t
    factor = (1.0 / omega(tt)) * (-2.0 * tt ** 3 / (1.0 - tt))
    g_score, _, _ = model.backward(cache, factor[:, None] * sdiff / n)
    if model.arch.learn_embeddings:
        g_direct = g_direct[:model.arch.n_net_params]
        g_score = g_score[:model.arch.n_net_params]
    if np.linalg.norm(g_direct) == 0.0 and np.linalg.norm(g_score) == 0.0:
        cos = 1.0
        note = (note + "; " if note else "") + "both gradients zero"
    else:
        cos = _cosine(g_direct, g_score)
    metrics.update(cosine=cos, n=n)
    return CheckReport("gan_alignment", bool(ok_ratio and cos > GAN_COSINE), metrics, note)


@_timed
def check_fisher_zero(rng, n=2_000):
    """Identical branches with ``lam=1`` give a zero Fisher estimate."""
    dist = toy_dist()
    arch = Architecture(data_dim=2, n_conditions=2, hidden=(16, 16))
    model = VelocityModel.init(arch, rng)
    est = fisher_estimate(model, dist, 0, ShiftSpec(1.0, 0.0), 1.0, n, rng)
    return CheckReport("fisher_zero", est == 0.0, {"estimate": est, "n": n})


def run_all(seed=0):
    """Run every check with an independent stream derived from ``seed``."""
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]
    return [
        check_duality(),
        check_corollary(streams[0]),
        check_endpoint_equiv(streams[1]),
        check_grad_equiv(model_seed=seed, batch_seed=seed + 1),
        check_kl_descent(streams[2]),
        check_gan_alignment(streams[3]),
        check_fisher_zero(streams[4]),
    ]
