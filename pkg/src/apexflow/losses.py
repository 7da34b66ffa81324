"""Training objectives and the quantities derived from them.

Notation: ``F`` is the network output under the real condition ``c`` at a
real path point ``(x_t, t)``; ``v_fake`` is the network output under the
shifted condition at the same point, always treated as a constant
(stop-gradient). Every loss is a batch mean. Functions accept
``with_grad=True`` to also return the flat parameter gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import SingularTimeError
from .net import shift_condition
from .paths import endpoint_predict, velocity_to_score, omega

T_MIN, T_MAX = 0.01, 0.99


@dataclass(frozen=True)
class LossWeights:
    lam: float = 0.5
    lam_p: float = 1.0
    lam_e: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if self.lam_p < 0 or self.lam_e < 0:
            raise ValueError("outer weights must be non-negative")


@dataclass
class FakeBranch:
    x_fake: np.ndarray
    x_t_fake: np.ndarray
    z_fake: np.ndarray
    t_fake: np.ndarray
    v_fake: np.ndarray


@dataclass
class ScoreSet:
    s_theta: np.ndarray
    s_fake: np.ndarray
    s_data: np.ndarray
    s_mix: np.ndarray


@dataclass
class LossReport:
    l_fm: float
    l_fake: float
    l_sup: float
    l_cons: float
    l_mix: float
    g_apex: float
    l_apex: float
    delta_v_norm: float
    weights: LossWeights
    batch_size: int
    t_mean: float
    t_lo: float
    t_hi: float
    grad: np.ndarray = field(default=None, repr=False)

    def record(self, step, wallclock_ms=None):
        rec = {"step": step}
        for k in ("l_fm", "l_fake", "l_sup", "l_cons", "l_mix", "g_apex", "l_apex",
                  "delta_v_norm"):
            rec[k] = getattr(self, k)
        rec["wallclock_ms"] = wallclock_ms
        return rec


def _check_batch(pp):
    if pp.x.ndim != 2 or pp.x.shape[0] == 0:
        raise ValueError("batch must be a non-empty (n, d) PathPoint")


def _sqnorm(v):
    return np.sum(v * v, axis=-1)


def _branches(model, pp, cond, shift=None, keep=False):
    c = model.embed(cond)
    out = model.forward(pp.x_t, pp.t, c, keep=keep)
    if shift is None:
        return c, out, None
    c_fake = shift_condition(c, shift)
    return c, out, c_fake


def fake_velocity(model, pp, cond, shift):
    """Shifted-branch velocity at the real path points, as a constant."""
    c_fake = shift_condition(model.embed(cond), shift)
    return model.forward(pp.x_t, pp.t, c_fake)


def _weight(t):
    # 1/omega(t) * t^2, folded to avoid the 1/t blow-up near t=0
    return t * (1.0 - t)


def _finish(model, cache, cond, g_F, g_c=None, extra=None):
    g, _, gc = model.backward(cache, g_F)
    if extra is not None:
        g = g + extra
    if model.arch.learn_embeddings:
        g = g + model.embedding_grad(cond, gc if g_c is None else gc + g_c)
    return g


# -- supervised flow matching ------------------------------------------

def l_fm(model, pp, cond, with_grad=False):
    _check_batch(pp)
    _, res, _ = _branches(model, pp, cond, keep=with_grad)
    F, cache = res if with_grad else (res, None)
    r = F - pp.v_data
    value = float(np.mean(_sqnorm(r)))
    if not with_grad:
        return value
    return value, _finish(model, cache, cond, 2.0 * r / len(r))


def sup_terms(F, pp, form="velocity"):
    """Per-sample supervised endpoint loss ``(1/omega) ||f(F) - x||^2``."""
    if form == "velocity":
        return _weight(pp.t) * _sqnorm(F - pp.v_data)
    return _sqnorm(endpoint_predict(F, pp.x_t, pp.t) - pp.x) / omega(pp.t)


def cons_terms(F, v_fake, pp, form="velocity"):
    if form == "velocity":
        return _weight(pp.t) * _sqnorm(F - v_fake)
    diff = endpoint_predict(F, pp.x_t, pp.t) - endpoint_predict(v_fake, pp.x_t, pp.t)
    return _sqnorm(diff) / omega(pp.t)


def t_mix(x, v_fake, x_t, t, lam):
    """Mixed endpoint target ``(1 - lam) x + lam f(v_fake)``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    return (1.0 - lam) * np.asarray(x, dtype=np.float64) + lam * endpoint_predict(v_fake, x_t, t)


def mix_terms(F, v_fake, pp, lam):
    ep = endpoint_predict(F, pp.x_t, pp.t)
    return _sqnorm(ep - t_mix(pp.x, v_fake, pp.x_t, pp.t, lam)) / omega(pp.t)


def _check_times(pp):
    if np.any(pp.t <= 0.0) or np.any(pp.t >= 1.0):
        raise SingularTimeError("endpoint losses need 0 < t < 1")


def l_sup(model, pp, cond, with_grad=False, form="velocity"):
    _check_batch(pp)
    _check_times(pp)
    _, res, _ = _branches(model, pp, cond, keep=with_grad)
    F, cache = res if with_grad else (res, None)
    value = float(np.mean(sup_terms(F, pp, form)))
    if not with_grad:
        return value
    g_F = 2.0 * _weight(pp.t)[:, None] * (F - pp.v_data) / len(F)
    return value, _finish(model, cache, cond, g_F)


def l_cons(model, pp, cond, shift, v_fake=None, with_grad=False, form="velocity"):
    _check_batch(pp)
    _check_times(pp)
    if v_fake is None:
        v_fake = fake_velocity(model, pp, cond, shift)
    _, res, _ = _branches(model, pp, cond, keep=with_grad)
    F, cache = res if with_grad else (res, None)
    value = float(np.mean(cons_terms(F, v_fake, pp, form)))
    if not with_grad:
        return value
    g_F = 2.0 * _weight(pp.t)[:, None] * (F - v_fake) / len(F)
    return value, _finish(model, cache, cond, g_F)


def _mix_cotangent(F, v_fake, pp, lam):
    tc = pp.t[:, None]
    ep = endpoint_predict(F, pp.x_t, pp.t)
    resid = ep - t_mix(pp.x, v_fake, pp.x_t, pp.t, lam)
    return (2.0 / omega(pp.t))[:, None] * resid * (-tc) / len(F)


def l_mix(model, pp, cond, shift, lam, v_fake=None, with_grad=False):
    """Mixed consistency loss, evaluated literally in endpoint space."""
    _check_batch(pp)
    _check_times(pp)
    if v_fake is None:
        v_fake = fake_velocity(model, pp, cond, shift)
    _, res, _ = _branches(model, pp, cond, keep=with_grad)
    F, cache = res if with_grad else (res, None)
    value = float(np.mean(mix_terms(F, v_fake, pp, lam)))
    if not with_grad:
        return value
    return value, _finish(model, cache, cond, _mix_cotangent(F, v_fake, pp, lam))


def g_apex(model, pp, cond, shift, lam, v_fake=None, with_grad=False):
    """``(1 - lam) l_sup + lam l_cons`` on one shared ``v_fake`` evaluation."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    if v_fake is None:
        _check_batch(pp)
        v_fake = fake_velocity(model, pp, cond, shift)
    if not with_grad:
        return ((1.0 - lam) * l_sup(model, pp, cond)
                + lam * l_cons(model, pp, cond, shift, v_fake=v_fake))
    vs, gs = l_sup(model, pp, cond, with_grad=True)
    vc, gc = l_cons(model, pp, cond, shift, v_fake=v_fake, with_grad=True)
    return (1.0 - lam) * vs + lam * vc, (1.0 - lam) * gs + lam * gc


# -- fake branch ---------------------------------------------------------

def draw_fake_noise(pp, rng, reuse_noise=False, t_range=(T_MIN, T_MAX)):
    """Noise and times for the fake trajectory: fresh draws unless reusing."""
    if reuse_noise:
        return pp.z, pp.t
    n, d = pp.x.shape
    z = rng.standard_normal((n, d))
    t = rng.uniform(t_range[0], t_range[1], size=n)
    return z, t


def _fake_forward(model, pp, F, c_fake, z_fake, t_fake, keep):
    x_fake = endpoint_predict(F, pp.x_t, pp.t)
    tf = np.asarray(t_fake)[:, None]
    x_t_fake = tf * z_fake + (1.0 - tf) * x_fake
    res = model.forward(x_t_fake, t_fake, c_fake, keep=keep)
    return x_fake, x_t_fake, res


def make_fake(model, pp, c, c_fake, z_fake, t_fake):
    """Fake sample from the real branch and the trajectory built on it.

    ``v_fake`` here is the shifted branch at the fake trajectory point and
    is returned for inspection only.
    """
    _check_batch(pp)
    if np.any(pp.t <= 0.0) or np.any(pp.t > 1.0):
        raise ValueError("make_fake needs 0 < t <= 1")
    F = model.forward(pp.x_t, pp.t, c)
    x_fake, x_t_fake, v = _fake_forward(model, pp, F, c_fake, z_fake, t_fake, keep=False)
    return FakeBranch(x_fake, x_t_fake, np.asarray(z_fake), np.asarray(t_fake), v)


def _fake_loss(model, pp, cond, F, cache, c_fake, z_fake, t_fake, with_grad):
    x_fake, x_t_fake, res = _fake_forward(model, pp, F, c_fake, z_fake, t_fake, keep=with_grad)
    F2, cache2 = res if with_grad else (res, None)
    r = F2 - (z_fake - x_fake)
    n = len(r)
    value = float(np.mean(_sqnorm(r)))
    if not with_grad:
        return value, None, None, None
    g_r = 2.0 * r / n
    g2, g_xtf, g_cf = model.backward(cache2, g_r)
    g_xfake = (1.0 - np.asarray(t_fake))[:, None] * g_xtf + g_r
    g_F = -pp.t[:, None] * g_xfake   # x_fake = x_t - t F
    return value, g2, g_F, g_cf


def l_fake(model, pp, cond, shift, rng, reuse_noise=False, t_range=(T_MIN, T_MAX),
           with_grad=False, noise=None):
    """Fake flow loss; gradients flow through both the shifted branch and ``x_fake``.

    ``noise`` may carry a pre-drawn ``(z_fake, t_fake)`` pair, in which case
    ``rng`` is not touched.
    """
    _check_batch(pp)
    c, res, c_fake = _branches(model, pp, cond, shift, keep=with_grad)
    F, cache = res if with_grad else (res, None)
    z_fake, t_fake = noise if noise is not None else draw_fake_noise(pp, rng, reuse_noise, t_range)
    value, g2, g_F, g_cf = _fake_loss(model, pp, cond, F, cache, c_fake, z_fake, t_fake, with_grad)
    if not with_grad:
        return value
    g = _finish(model, cache, cond, g_F, g_c=None, extra=g2)
    if model.arch.learn_embeddings:
        g = g + model.embedding_grad(cond, shift.a * g_cf)
    return value, g


# -- full objective --------------------------------------------------------

def l_apex(model, pp, cond, shift, weights: LossWeights, rng, reuse_noise=False,
           t_range=(T_MIN, T_MAX), with_grad=True, noise=None):
    """``lam_p l_fake + lam_e l_mix`` with every sub-term recorded."""
    _check_batch(pp)
    _check_times(pp)
    c, (F, cache), c_fake = _branches(model, pp, cond, shift, keep=True)
    v_fake = model.forward(pp.x_t, pp.t, c_fake)
    z_fake, t_fake = noise if noise is not None else draw_fake_noise(pp, rng, reuse_noise, t_range)
    lam = weights.lam

    sup = float(np.mean(sup_terms(F, pp)))
    cons = float(np.mean(cons_terms(F, v_fake, pp)))
    mix = float(np.mean(mix_terms(F, v_fake, pp, lam)))
    fm = float(np.mean(_sqnorm(F - pp.v_data)))
    fake, g2, g_F_fake, g_cf = _fake_loss(model, pp, cond, F, cache, c_fake, z_fake, t_fake,
                                          with_grad)
    total = weights.lam_p * fake + weights.lam_e * mix
    g = None
    if with_grad:
        g_F = weights.lam_p * g_F_fake + weights.lam_e * _mix_cotangent(F, v_fake, pp, lam)
        g = _finish(model, cache, cond, g_F, extra=weights.lam_p * g2)
        if model.arch.learn_embeddings:
            g = g + model.embedding_grad(cond, weights.lam_p * shift.a * g_cf)
    return LossReport(
        l_fm=fm, l_fake=fake, l_sup=sup, l_cons=cons, l_mix=mix,
        g_apex=(1.0 - lam) * sup + lam * cons, l_apex=total,
        delta_v_norm=float(np.mean(np.sqrt(_sqnorm(v_fake - F)))),
        weights=weights, batch_size=len(F), t_mean=float(np.mean(pp.t)),
        t_lo=float(np.min(pp.t)), t_hi=float(np.max(pp.t)), grad=g)


# -- diagnostics -----------------------------------------------------------

def delta_v(model, x_t, t, c, c_fake):
    """Velocity correction ``v_fake - v_theta`` at the same point."""
    return model.forward(x_t, t, c_fake) - model.forward(x_t, t, c)


def induced_scores(model, x_t, t, cond, shift, oracle, lam):
    """Scores implied by both branches, the oracle data score and their mix."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr <= 0.0) or np.any(t_arr >= 1.0):
        raise SingularTimeError("induced scores need 0 < t < 1")
    c = model.embed(cond)
    c_fake = shift_condition(c, shift)
    s_theta = velocity_to_score(model.forward(x_t, t, c), x_t, t)
    s_fake = velocity_to_score(model.forward(x_t, t, c_fake), x_t, t)
    s_data = oracle.marginal_score(cond, x_t, t)
    return ScoreSet(s_theta, s_fake, s_data, (1.0 - lam) * s_data + lam * s_fake)


def fake_trajectory_points(model, oracle, cond, n, rng, t_range=(T_MIN, T_MAX)):
    """Points ``x_t`` on the model's own generation path.

    Real pairs give ``x_fake = x_t - t F``; a fresh ``(z', t')`` then places a
    point on the straight path from ``x_fake`` to noise.
    """
    from .paths import interpolate

    x, z = oracle.sample_pair(cond, rng, n)
    t = rng.uniform(t_range[0], t_range[1], size=n)
    pp = interpolate(x, z, t)
    F = model.forward(pp.x_t, pp.t, model.embed(cond))
    x_fake = endpoint_predict(F, pp.x_t, pp.t)
    z2 = rng.standard_normal(x.shape)
    t2 = rng.uniform(t_range[0], t_range[1], size=n)
    return t2[:, None] * z2 + (1.0 - t2[:, None]) * x_fake, t2


def fisher_estimate(model, oracle, cond, shift, lam, n_samples, rng, t_range=(T_MIN, T_MAX),
                    return_se=False):
    """Monte-Carlo ``E ||s_theta - s_mix||^2`` over the model's fake trajectory."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    x_t, t = fake_trajectory_points(model, oracle, cond, n_samples, rng, t_range)
    scores = induced_scores(model, x_t, t, cond, shift, oracle, lam)
    vals = _sqnorm(scores.s_theta - scores.s_mix)
    est = float(np.mean(vals))
    if return_se:
        return est, float(np.std(vals) / np.sqrt(n_samples))
    return est
