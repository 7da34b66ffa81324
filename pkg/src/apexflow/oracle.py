"""Analytic conditional data distributions used as ground truth.

Each condition is a mixture of isotropic Gaussians. Under the straight
path ``x_t = t z + (1 - t) x`` every component stays Gaussian, with mean
``(1 - t) mu`` and variance ``(1 - t)^2 sigma^2 + t^2``, so marginal scores
and conditional-mean velocities are available in closed form.

The optimal velocity is obtained by conditioning the joint Gaussian of
``(x, z, x_t)`` directly. It never goes through the score, so the
score/velocity relation can be checked against it without circularity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import SingularTimeError


@dataclass(frozen=True)
class Component:
    weight: float
    mean: tuple
    sigma: float


@dataclass(frozen=True)
class OracleDist:
    """Per-condition isotropic Gaussian mixtures.

    ``conditions[k]`` is the component list of condition ``k``.
    """

    conditions: tuple
    dim: int = field(init=False)

    def __post_init__(self):
        if len(self.conditions) < 1:
            raise ValueError("need at least one condition")
        conds = tuple(tuple(Component(float(c.weight), tuple(float(m) for m in c.mean),
                                      float(c.sigma)) for c in comps)
                      for comps in self.conditions)
        dims = {len(c.mean) for comps in conds for c in comps}
        if len(dims) != 1:
            raise ValueError("all component means must share one dimension")
        for k, comps in enumerate(conds):
            if not comps:
                raise ValueError(f"condition {k} has no components")
            if abs(sum(c.weight for c in comps) - 1.0) > 1e-12:
                raise ValueError(f"condition {k}: weights must sum to 1")
            for c in comps:
                if not (c.sigma > 0.0 and np.isfinite(c.sigma)):
                    raise ValueError(f"condition {k}: sigma must be positive")
                if c.weight < 0.0:
                    raise ValueError(f"condition {k}: negative weight")
        object.__setattr__(self, "conditions", conds)
        object.__setattr__(self, "dim", dims.pop())

    @classmethod
    def gaussians(cls, means, sigmas):
        """One Gaussian per condition."""
        sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), (len(means),))
        return cls(tuple((Component(1.0, tuple(m), float(s)),)
                         for m, s in zip(means, sigmas)))

    @property
    def n_conditions(self):
        return len(self.conditions)

    def _arrays(self, cond):
        if not 0 <= cond < self.n_conditions:
            raise ValueError(f"condition {cond} out of range [0, {self.n_conditions})")
        comps = self.conditions[cond]
        w = np.array([c.weight for c in comps])
        mu = np.array([c.mean for c in comps])
        sig = np.array([c.sigma for c in comps])
        return w, mu, sig

    def mean(self, cond):
        w, mu, _ = self._arrays(cond)
        return w @ mu

    def variance(self, cond):
        """Isotropic (per-coordinate averaged) variance of the condition."""
        w, mu, sig = self._arrays(cond)
        m = w @ mu
        spread = np.sum((mu - m) ** 2, axis=1) / self.dim
        return float(w @ (sig ** 2 + spread))

    # -- sampling ---------------------------------------------------------

    def sample_x(self, cond, n, rng):
        w, mu, sig = self._arrays(cond)
        idx = rng.choice(len(w), size=n, p=w) if len(w) > 1 else np.zeros(n, dtype=int)
        eps = rng.standard_normal((n, self.dim))
        return mu[idx] + sig[idx, None] * eps

    def sample_pair(self, cond, rng, n=None):
        """Draw ``(x, z)``: ``x`` from the condition, ``z`` standard normal.

        With ``n=None`` single vectors are returned, otherwise ``(n, d)`` arrays.
        """
        m = 1 if n is None else n
        x = self.sample_x(cond, m, rng)
        z = rng.standard_normal((m, self.dim))
        return (x[0], z[0]) if n is None else (x, z)

    # -- time marginals ---------------------------------------------------

    def _responsibilities(self, cond, x_t, t):
        w, mu, sig = self._arrays(cond)
        x_t = np.asarray(x_t, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        tc = t[..., None] if t.ndim else t
        var = (1.0 - tc) ** 2 * sig ** 2 + tc ** 2            # (..., K)
        centered = x_t[..., None, :] - (1.0 - tc)[..., None] * mu  # (..., K, d)
        sq = np.sum(centered ** 2, axis=-1)
        logp = np.log(w) - 0.5 * sq / var - 0.5 * self.dim * np.log(2 * np.pi * var)
        resp = np.exp(logp - logsumexp(logp, axis=-1, keepdims=True))
        return resp, var, centered, mu, sig, tc

    def log_density(self, cond, x_t, t):
        w, mu, sig = self._arrays(cond)
        x_t = np.asarray(x_t, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        tc = t[..., None] if t.ndim else t
        var = (1.0 - tc) ** 2 * sig ** 2 + tc ** 2
        sq = np.sum((x_t[..., None, :] - (1.0 - tc)[..., None] * mu) ** 2, axis=-1)
        logp = np.log(w) - 0.5 * sq / var - 0.5 * self.dim * np.log(2 * np.pi * var)
        return logsumexp(logp, axis=-1)

    def marginal_score(self, cond, x_t, t):
        """Exact gradient of the log marginal density at time ``t``."""
        t_arr = np.asarray(t, dtype=np.float64)
        if np.any(t_arr <= 0.0) or np.any(t_arr > 1.0):
            raise SingularTimeError("marginal_score needs 0 < t <= 1")
        resp, var, centered, *_ = self._responsibilities(cond, x_t, t)
        return np.sum(resp[..., None] * (-centered / var[..., None]), axis=-2)

    def _velocity(self, cond, x_t, t):
        # per component: E[z - x | x_t] = (t - (1-t) sigma^2) / var * (x_t - (1-t) mu) - mu
        resp, var, centered, mu, sig, tc = self._responsibilities(cond, x_t, t)
        gain = (tc - (1.0 - tc) * sig ** 2) / var              # (..., K)
        v_k = gain[..., None] * centered - mu
        return np.sum(resp[..., None] * v_k, axis=-2)

    def optimal_velocity(self, cond, x_t, t):
        """Conditional-mean velocity ``E[z - x | x_t]``."""
        t_arr = np.asarray(t, dtype=np.float64)
        if np.any(t_arr <= 0.0) or np.any(t_arr >= 1.0):
            raise SingularTimeError("optimal_velocity needs 0 < t < 1")
        return self._velocity(cond, x_t, t)

    def field(self, cond):
        """Exact velocity field as a ``(x, t) -> v`` callable for samplers.

        Unlike :meth:`optimal_velocity` this accepts ``t = 1``, where the
        conditional mean is still well defined.
        """
        self._arrays(cond)

        def v(x, t):
            t_arr = np.asarray(t, dtype=np.float64)
            if np.any(t_arr <= 0.0) or np.any(t_arr > 1.0):
                raise SingularTimeError("oracle field needs 0 < t <= 1")
            return self._velocity(cond, x, t)

        return v

    def mc_velocity(self, cond, x_t, t, n, rng):
        """Self-normalised importance estimate of ``E[z - x | x_t]``.

        Draws ``x`` from the data and weights each draw by the Gaussian
        likelihood of ``x_t`` given ``x``. Single query point only.
        """
        x_t = np.asarray(x_t, dtype=np.float64)
        xs = self.sample_x(cond, n, rng)
        resid = x_t - (1.0 - t) * xs
        logw = -0.5 * np.sum(resid ** 2, axis=1) / t ** 2
        w = np.exp(logw - logsumexp(logw))
        v = resid / t - xs   # z implied by (x, x_t), minus x
        est = w @ v
        # delta-method standard error of a ratio estimator
        se = np.sqrt(np.sum((w[:, None] * (v - est)) ** 2, axis=0))
        return est, se


def gaussian_w2(mean_a, var_a, mean_b, var_b):
    """Squared 2-Wasserstein distance between isotropic Gaussians."""
    if var_a < 0 or var_b < 0:
        raise ValueError("variances must be non-negative")
    mean_a = np.asarray(mean_a, dtype=np.float64)
    mean_b = np.asarray(mean_b, dtype=np.float64)
    d = mean_a.shape[-1]
    return float(np.sum((mean_a - mean_b) ** 2) + d * (np.sqrt(var_a) - np.sqrt(var_b)) ** 2)
