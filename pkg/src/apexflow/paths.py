"""OT interpolation path, endpoint predictor and score/velocity conversions.

Everything here works on float64 arrays whose last axis is the data
dimension. Times may be scalars or arrays broadcastable against the
leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularTimeError


@dataclass(frozen=True)
class PathPoint:
    """Point(s) on the straight noise/data path.

    ``x`` and ``z`` have shape ``(..., d)``; ``t`` has the leading shape.
    """

    x: np.ndarray
    z: np.ndarray
    t: np.ndarray
    x_t: np.ndarray
    v_data: np.ndarray

    def __len__(self):
        return 1 if self.x.ndim == 1 else self.x.shape[0]


def _as_time(t):
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise ValueError("time must be finite")
    return t


def _tcol(t, ref):
    """Broadcast time against a ``(..., d)`` array."""
    t = np.asarray(t, dtype=np.float64)
    return t[..., None] if t.ndim and t.ndim == ref.ndim - 1 else t


def _check_same_shape(a, b, what):
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def interpolate(x, z, t) -> PathPoint:
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    _check_same_shape(x, z, "interpolate")
    t = _as_time(t)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("interpolate: t must lie in [0, 1]")
    tc = _tcol(t, x)
    x_t = tc * z + (1.0 - tc) * x
    return PathPoint(x=x, z=z, t=t, x_t=x_t, v_data=z - x)


def endpoint_predict(F, x_t, t):
    """Clean sample implied by velocity ``F`` at ``(x_t, t)``: ``x_t - t F``."""
    F = np.asarray(F, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    _check_same_shape(F, x_t, "endpoint_predict")
    t = _as_time(t)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("endpoint_predict: t must lie in [0, 1]")
    return x_t - _tcol(t, x_t) * F


def velocity_to_score(v, x_t, t):
    v = np.asarray(v, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    _check_same_shape(v, x_t, "velocity_to_score")
    t = _as_time(t)
    if np.any(t == 0.0):
        raise SingularTimeError("velocity_to_score is undefined at t=0")
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("velocity_to_score: t must lie in (0, 1]")
    tc = _tcol(t, x_t)
    return -(x_t + (1.0 - tc) * v) / tc


def score_to_velocity(s, x_t, t):
    s = np.asarray(s, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    _check_same_shape(s, x_t, "score_to_velocity")
    t = _as_time(t)
    if np.any(t == 1.0):
        raise SingularTimeError("score_to_velocity is undefined at t=1")
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("score_to_velocity: t must lie in [0, 1)")
    tc = _tcol(t, x_t)
    return -(x_t + tc * s) / (1.0 - tc)


def omega(t):
    """Time weight ``t / (1 - t)``."""
    t = _as_time(t)
    if np.any(t == 1.0):
        raise SingularTimeError("omega is undefined at t=1")
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("omega: t must lie in [0, 1)")
    w = t / (1.0 - t)
    return float(w) if w.ndim == 0 else w
