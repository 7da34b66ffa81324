"""Self-adversarial one-step flow matching on analytic toy distributions."""

from .config import RunConfig, load_config
from .losses import LossWeights, l_apex
from .net import Architecture, ShiftSpec, VelocityModel
from .oracle import OracleDist
from .paths import endpoint_predict, interpolate, score_to_velocity, velocity_to_score
from .sampler import euler_sample, one_step_sample
from .trainer import train

__all__ = [
    "Architecture", "LossWeights", "OracleDist", "RunConfig", "ShiftSpec", "VelocityModel",
    "endpoint_predict", "euler_sample", "interpolate", "l_apex", "load_config",
    "one_step_sample", "score_to_velocity", "train", "velocity_to_score",
]
