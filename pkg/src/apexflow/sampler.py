"""Euler integration of the probability-flow ODE and one-step sampling.

Samplers take a velocity field ``field(x, t) -> v``; use
``VelocityModel.field(cond)`` or ``OracleDist.field(cond)`` to build one.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import NumericFailure


@dataclass
class Trajectory:
    times: list = dc_field(default_factory=list)
    states: list = dc_field(default_factory=list)
    nfe: int = 0


def euler_sample(field, z, n_steps, record=True):
    """Integrate from ``t=1`` to ``t=0`` on a uniform grid.

    ``x_{k+1} = x_k - (1/n) field(x_k, t_k)`` with ``t_k = 1 - k/n``.
    Returns ``(x0, trajectory)``.
    """
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValueError("n_steps must be a positive integer")
    n_steps = int(n_steps)
    x = np.array(z, dtype=np.float64)
    traj = Trajectory()
    dt = 1.0 / n_steps
    if record:
        traj.times.append(1.0)
        traj.states.append(x.copy())
    for k in range(n_steps):
        t = 1.0 - k / n_steps
        x = x - dt * field(x, t)
        traj.nfe += 1
        if not np.all(np.isfinite(x)):
            raise NumericFailure(f"non-finite state after Euler step {k}")
        if record:
            traj.times.append(1.0 - (k + 1) / n_steps)
            traj.states.append(x.copy())
    return x, traj


def one_step_sample(field, z):
    """``z - field(z, 1)``: the endpoint prediction at pure noise."""
    z = np.asarray(z, dtype=np.float64)
    x = z - 1.0 * field(z, 1.0)
    if not np.all(np.isfinite(x)):
        raise NumericFailure("non-finite one-step sample")
    return x
