"""Sample-quality metrics against the oracle condition distributions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracle import gaussian_w2
from .sampler import euler_sample


@dataclass
class MomentReport:
    mean_err: float
    var_err: float
    mean: np.ndarray
    var: float


def isotropic_moments(samples):
    s = np.asarray(samples, dtype=np.float64)
    m = s.mean(axis=0)
    return m, float(np.mean(np.var(s, axis=0)))


def moment_report(samples, oracle, cond):
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] < 2:
        raise ValueError("need at least two samples")
    m, v = isotropic_moments(s)
    return MomentReport(float(np.linalg.norm(m - oracle.mean(cond))),
                        abs(v - oracle.variance(cond)), m, v)


def sample_w2(samples, oracle, cond):
    m, v = isotropic_moments(samples)
    return gaussian_w2(m, v, oracle.mean(cond), oracle.variance(cond))


def nfe_gap(field, oracle, cond, nfes, n, rng):
    """W2 (and moment errors) of Euler samples for each NFE.

    The same noise batch is reused across NFEs so that differences reflect
    discretisation rather than sampling noise.
    """
    nfes = list(nfes)
    if not nfes:
        raise ValueError("nfe list must be non-empty")
    z = rng.standard_normal((n, oracle.dim))
    rows = []
    for k in nfes:
        x, _ = euler_sample(field, z, k, record=False)
        rep = moment_report(x, oracle, cond)
        rows.append({"nfe": int(k), "cond": int(cond), "w2": sample_w2(x, oracle, cond),
                     "mean_err": rep.mean_err, "var_err": rep.var_err})
    return rows
