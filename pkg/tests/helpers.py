import numpy as np

from apexflow.net import Architecture, VelocityModel
from apexflow.oracle import OracleDist
from apexflow.paths import interpolate


def toy_dist():
    return OracleDist.gaussians([(2.0, 0.0), (-2.0, 0.0)], 0.5)


def small_model(seed=0, hidden=(8,), embed_dim=2, time_features=2, learn=False, d=2, k=2,
                activation="tanh"):
    arch = Architecture(data_dim=d, n_conditions=k, embed_dim=embed_dim, hidden=hidden,
                        time_features=time_features, learn_embeddings=learn,
                        activation=activation)
    return VelocityModel.init(arch, np.random.default_rng(seed))


def linear_1d(bias, w_c=0.0, c=1.0):
    """1D single linear layer: ``F = w_c * c + bias`` whatever ``x_t`` and ``t``.

    Inputs are ``[x_t, sin, cos, c]``; only the condition weight and bias
    are non-zero.
    """
    arch = Architecture(data_dim=1, n_conditions=1, embed_dim=1, hidden=(), time_features=1)
    params = np.array([0.0, 0.0, 0.0, w_c, bias])
    return VelocityModel(arch, params, np.array([[c]]))


def batch(dist, n, seed, t_range=(0.01, 0.99)):
    rng = np.random.default_rng(seed)
    cond = rng.integers(dist.n_conditions, size=n)
    x = np.stack([dist.sample_x(int(k), 1, rng)[0] for k in cond])
    z = rng.standard_normal(x.shape)
    return interpolate(x, z, rng.uniform(*t_range, size=n)), cond


def hand_1d():
    """The 1D sample x=2, z=0, t=0.5 (so x_t=1, v_data=-2)."""
    return interpolate(np.array([[2.0]]), np.array([[0.0]]), np.array([0.5])), np.array([0])
