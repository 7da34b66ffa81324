"""Velocity network ``F(x_t, t, c)`` with hand-written backpropagation.

The network is an MLP on ``concat(x_t, time_features(t), c)``. Parameters
live in one flat float64 vector so that optimisers, finite differences
and checkpoints can treat them uniformly. :meth:`VelocityModel.forward`
returns a cache; :meth:`VelocityModel.backward` turns an output cotangent
into gradients for the parameters, the input point and the condition
vector. A value that never goes through ``backward`` carries no gradient,
which is how stop-gradient is expressed throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import NumericFailure


@dataclass(frozen=True)
class ShiftSpec:
    """Affine condition shift ``c_fake = a c + b 1``."""

    a: float = -0.5
    b: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("shift parameters must be finite")


def shift_condition(c, shift: ShiftSpec):
    c = np.asarray(c, dtype=np.float64)
    if not np.all(np.isfinite(c)):
        raise ValueError("condition vector must be finite")
    return shift.a * c + shift.b


_ACTIVATIONS = ("tanh", "silu")


@dataclass(frozen=True)
class Architecture:
    data_dim: int = 2
    n_conditions: int = 2
    embed_dim: int = 4
    hidden: tuple = (128, 128)
    activation: str = "tanh"
    time_features: int = 8
    learn_embeddings: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        for name in ("data_dim", "n_conditions", "embed_dim", "time_features"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be positive")

    @property
    def in_dim(self):
        return self.data_dim + 2 * self.time_features + self.embed_dim

    def layer_shapes(self):
        dims = (self.in_dim, *self.hidden, self.data_dim)
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_net_params(self):
        return sum(i * o + o for i, o in self.layer_shapes())

    @property
    def n_params(self):
        extra = self.n_conditions * self.embed_dim if self.learn_embeddings else 0
        return self.n_net_params + extra

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def time_frequencies(n):
    return np.pi * 2.0 ** (np.arange(n) / 2.0)


def time_features(t, n):
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    arg = t * time_frequencies(n)
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


@dataclass
class VelocityModel:
    arch: Architecture
    params: np.ndarray
    table: np.ndarray = field(default=None)
    n_forward: int = field(default=0, compare=False)

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.shape != (self.arch.n_params,):
            raise ValueError(f"expected {self.arch.n_params} params, got {self.params.shape}")
        if not self.arch.learn_embeddings:
            shape = (self.arch.n_conditions, self.arch.embed_dim)
            if self.table is None or np.shape(self.table) != shape:
                raise ValueError(f"fixed embedding table must have shape {shape}")
            self.table = np.ascontiguousarray(self.table, dtype=np.float64)

    @classmethod
    def init(cls, arch: Architecture, rng):
        """Scaled-normal weights (std ``1/sqrt(fan_in)``), zero biases, unit-normal table."""
        chunks = []
        for i, o in arch.layer_shapes():
            chunks.append((rng.standard_normal((i, o)) / np.sqrt(i)).ravel())
            chunks.append(np.zeros(o))
        table = rng.standard_normal((arch.n_conditions, arch.embed_dim))
        if arch.learn_embeddings:
            chunks.append(table.ravel())
            return cls(arch, np.concatenate(chunks))
        return cls(arch, np.concatenate(chunks), table)

    def with_params(self, params):
        return VelocityModel(self.arch, np.array(params, dtype=np.float64), self.table)

    @property
    def embeddings(self):
        if self.arch.learn_embeddings:
            return self.params[self.arch.n_net_params:].reshape(
                self.arch.n_conditions, self.arch.embed_dim)
        return self.table

    def embed(self, cond):
        cond = np.asarray(cond)
        if np.any(cond < 0) or np.any(cond >= self.arch.n_conditions):
            raise ValueError("condition label out of range")
        return self.embeddings[cond]

    def layers(self):
        out, pos = [], 0
        for i, o in self.arch.layer_shapes():
            W = self.params[pos:pos + i * o].reshape(i, o)
            pos += i * o
            out.append((W, self.params[pos:pos + o]))
            pos += o
        return out

    # -- evaluation -----------------------------------------------------

    def forward(self, x_t, t, c, keep=False):
        """Evaluate the velocity for a batch.

        ``x_t`` is ``(n, d)`` (or ``(d,)``), ``t`` a scalar or ``(n,)``,
        ``c`` an ``(n, e)`` or ``(e,)`` embedding. With ``keep=True`` the
        return value is ``(out, cache)`` for :meth:`backward`.
        """
        x_t = np.asarray(x_t, dtype=np.float64)
        single = x_t.ndim == 1
        x2 = np.atleast_2d(x_t)
        n = x2.shape[0]
        a = self.arch
        if x2.shape[1] != a.data_dim:
            raise ValueError(f"x_t has dimension {x2.shape[1]}, expected {a.data_dim}")
        c2 = np.asarray(c, dtype=np.float64)
        c2 = np.broadcast_to(c2, (n, c2.shape[-1])) if c2.ndim == 1 else c2
        if c2.shape != (n, a.embed_dim):
            raise ValueError(f"condition has shape {c2.shape}, expected {(n, a.embed_dim)}")
        t2 = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
        h = np.concatenate([x2, time_features(t2, a.time_features), c2], axis=1)
        acts = [h]
        pre = []
        layers = self.layers()
        for W, b in layers[:-1]:
            z = h @ W + b
            h = np.tanh(z) if a.activation == "tanh" else z / (1.0 + np.exp(-z))
            pre.append(z)
            acts.append(h)
        W, b = layers[-1]
        out = h @ W + b
        self.n_forward += 1
        if single:
            out = out[0]
        if keep:
            return out, (acts, pre, single)
        return out

    def backward(self, cache, g_out):
        """Vector-Jacobian product. Returns ``(g_params, g_x, g_c)``."""
        acts, pre, single = cache
        g = np.atleast_2d(np.asarray(g_out, dtype=np.float64))
        a = self.arch
        layers = self.layers()
        grads = []
        for li in range(len(layers) - 1, -1, -1):
            W, _ = layers[li]
            h_in = acts[li]
            grads.append((h_in.T @ g, g.sum(axis=0)))
            g = g @ W.T
            if li > 0:
                z = pre[li - 1]
                if a.activation == "tanh":
                    g = g * (1.0 - acts[li] ** 2)
                else:
                    s = 1.0 / (1.0 + np.exp(-z))
                    g = g * (s * (1.0 + z * (1.0 - s)))
        flat = np.concatenate([p.ravel() for gw, gb in reversed(grads) for p in (gw, gb)])
        g_x = g[:, :a.data_dim]
        g_c = g[:, a.data_dim + 2 * a.time_features:]
        if a.learn_embeddings:
            flat = np.concatenate([flat, np.zeros(a.n_conditions * a.embed_dim)])
        if single:
            g_x, g_c = g_x[0], g_c[0]
        return flat, g_x, g_c

    def embedding_grad(self, cond, g_c):
        """Scatter per-sample condition cotangents into a flat param gradient."""
        out = np.zeros(self.arch.n_params)
        if self.arch.learn_embeddings:
            tab = np.zeros((self.arch.n_conditions, self.arch.embed_dim))
            np.add.at(tab, np.asarray(cond), np.atleast_2d(g_c))
            out[self.arch.n_net_params:] = tab.ravel()
        return out

    def field(self, cond):
        """``(x, t) -> v`` callable at a fixed condition label, for samplers."""
        c = self.embed(cond)
        return lambda x, t: self.forward(x, t, c)


# -- gradient utilities ---------------------------------------------------

def grad(model, loss, batch):
    """Gradient of ``loss(model, batch) -> (value, grad)`` with a finiteness check."""
    value, g = loss(model, batch)
    if not np.isfinite(value):
        raise NumericFailure(f"non-finite loss {value!r}")
    bad = np.flatnonzero(~np.isfinite(g))
    if bad.size:
        raise NumericFailure(f"non-finite gradient at {bad.size} coordinates, first {bad[0]}")
    return g


@dataclass
class FiniteDiffReport:
    max_rel_err: float
    worst_index: int
    failures: list
    passed: bool


def check_finite_diff(model, loss, batch, h=1e-5, tol=1e-4, floor=1e-8):
    """Compare ``grad`` against central differences coordinate by coordinate."""
    n = model.params.size
    if n > 10_000:
        raise ValueError("too many parameters for a brute-force check")
    g = grad(model, loss, batch)
    theta = model.params
    fd = np.empty(n)
    for i in range(n):
        step = np.zeros(n)
        step[i] = h
        lp, _ = loss(model.with_params(theta + step), batch)
        lm, _ = loss(model.with_params(theta - step), batch)
        fd[i] = (lp - lm) / (2 * h)
    rel = np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), floor)
    failures = np.flatnonzero(rel >= tol).tolist()
    worst = int(np.argmax(rel))
    return FiniteDiffReport(float(rel[worst]), worst, failures, not failures)
