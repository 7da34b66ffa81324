"""Run configuration: a flat, versioned TOML schema.

Every key is optional except ``version``; unknown keys are rejected. The
data distribution is given as an array of inline tables::

    version = 1
    components = [
      {cond = 0, weight = 1.0, mean = [2.0, 0.0], sigma = 0.5},
      {cond = 1, weight = 1.0, mean = [-2.0, 0.0], sigma = 0.5},
    ]
    shift_a = -0.5
    shift_b = 1.0
    steps = 20000
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .losses import LossWeights
from .net import Architecture, ShiftSpec
from .oracle import Component, OracleDist

CONFIG_VERSION = 1


def _toy_components():
    return [
        {"cond": 0, "weight": 1.0, "mean": [2.0, 0.0], "sigma": 0.5},
        {"cond": 1, "weight": 1.0, "mean": [-2.0, 0.0], "sigma": 0.5},
    ]


@dataclass
class RunConfig:
    version: int = CONFIG_VERSION
    components: list = field(default_factory=_toy_components)
    embed_dim: int = 4
    hidden: list = field(default_factory=lambda: [128, 128])
    activation: str = "tanh"
    time_features: int = 8
    learn_embeddings: bool = False
    shift_a: float = -0.5
    shift_b: float = 1.0
    lam: float = 0.5
    lam_p: float = 1.0
    lam_e: float = 1.0
    t_min: float = 0.01
    t_max: float = 0.99
    batch_size: int = 128
    steps: int = 20000
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    fake_reuse_noise: bool = False
    pretrain_steps: int = 0
    deterministic: bool = True
    eval_nfe: list = field(default_factory=lambda: [1, 2, 5, 20, 50])
    eval_samples: int = 10000

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError("version", f"unsupported config version {self.version}")
        if not 0.0 < self.t_min < self.t_max < 1.0:
            raise ConfigError("t_min", "need 0 < t_min < t_max < 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size", "must be >= 1")
        if self.steps < 0:
            raise ConfigError("steps", "must be >= 0")
        if not 0 <= self.pretrain_steps <= self.steps:
            raise ConfigError("pretrain_steps", "must lie in [0, steps]")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError("optimizer", "must be 'adam' or 'sgd'")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lam", "must lie in [0, 1]")
        for k in ("lam_p", "lam_e"):
            if getattr(self, k) < 0:
                raise ConfigError(k, "must be >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        try:
            self.dist()
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError("components", str(exc)) from None
        try:
            self.arch()
        except ValueError as exc:
            raise ConfigError("hidden", str(exc)) from None

    def dist(self) -> OracleDist:
        by_cond = {}
        for comp in self.components:
            extra = set(comp) - {"cond", "weight", "mean", "sigma"}
            if extra:
                raise ValueError(f"unknown component keys {sorted(extra)}")
            by_cond.setdefault(int(comp["cond"]), []).append(
                Component(float(comp.get("weight", 1.0)), tuple(comp["mean"]), float(comp["sigma"])))
        if sorted(by_cond) != list(range(len(by_cond))):
            raise ValueError("condition labels must be 0..K-1")
        return OracleDist(tuple(tuple(by_cond[k]) for k in range(len(by_cond))))

    def arch(self) -> Architecture:
        d = self.dist()
        return Architecture(data_dim=d.dim, n_conditions=d.n_conditions,
                            embed_dim=self.embed_dim, hidden=tuple(self.hidden),
                            activation=self.activation, time_features=self.time_features,
                            learn_embeddings=self.learn_embeddings)

    def shift(self) -> ShiftSpec:
        return ShiftSpec(self.shift_a, self.shift_b)

    def weights(self) -> LossWeights:
        return LossWeights(self.lam, self.lam_p, self.lam_e)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _check_type(key, value):
    want = _TYPES[key]
    ok = {
        "int": isinstance(value, int) and not isinstance(value, bool),
        "float": isinstance(value, (int, float)) and not isinstance(value, bool),
        "bool": isinstance(value, bool),
        "str": isinstance(value, str),
        "list": isinstance(value, list),
    }[want]
    if not ok:
        raise ConfigError(key, f"expected {want}, got {type(value).__name__}")
    return float(value) if want == "float" else value


def from_mapping(data) -> RunConfig:
    if "version" not in data:
        raise ConfigError("version", "missing")
    kwargs = {}
    for key, value in data.items():
        if key not in _TYPES:
            raise ConfigError(key, "unknown key")
        kwargs[key] = _check_type(key, value)
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    with open(path, "rb") as f:
        try:
            data = tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("<file>", str(exc)) from None
    return from_mapping(data)
