import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from apexflow.errors import SingularTimeError
from apexflow.paths import (endpoint_predict, interpolate, omega, score_to_velocity,
                            velocity_to_score)
from apexflow.oracle import OracleDist

finite = st.floats(-1e3, 1e3, allow_nan=False)
times = st.floats(0.0, 1.0)


@pytest.mark.parametrize("t, expect", [(0.0, (1, 0)), (1.0, (0, 1))])
def test_interpolate_boundaries(t, expect):
    pp = interpolate(np.array([1.0, 0.0]), np.array([0.0, 1.0]), t)
    np.testing.assert_array_equal(pp.x_t, expect)


def test_interpolate_midpoint():
    pp = interpolate(np.array([2.0, -2.0]), np.zeros(2), 0.5)
    np.testing.assert_array_equal(pp.x_t, [1.0, -1.0])
    np.testing.assert_array_equal(pp.v_data, [-2.0, 2.0])


@given(arrays(float, 3, elements=finite), arrays(float, 3, elements=finite), times)
def test_interpolate_identities(x, z, t):
    pp = interpolate(x, z, t)
    np.testing.assert_array_equal(pp.x_t, t * z + (1 - t) * x)
    np.testing.assert_allclose(pp.x_t - x, t * pp.v_data, atol=1e-9 * (1 + np.abs(x).max()
                                                                         + np.abs(z).max()))


@pytest.mark.parametrize("t", [-0.1, 1.5, np.nan])
def test_interpolate_rejects_bad_time(t):
    with pytest.raises(ValueError):
        interpolate(np.zeros(2), np.zeros(2), t)


def test_interpolate_shape_mismatch():
    with pytest.raises(ValueError):
        interpolate(np.zeros(2), np.zeros(3), 0.5)


def test_endpoint_examples():
    np.testing.assert_array_equal(endpoint_predict(np.array([7.0, -3.0]), np.array([5.0, 5.0]), 0.0),
                                  [5.0, 5.0])
    np.testing.assert_array_equal(endpoint_predict(np.array([2.0, 0.0]), np.array([1.0, 1.0]), 0.5),
                                  [0.0, 1.0])


def test_endpoint_recovers_x_from_true_velocity():
    x, z = np.array([3.0, 4.0]), np.array([-1.0, 2.0])
    pp = interpolate(x, z, 0.7)
    np.testing.assert_array_equal(pp.v_data, [-4.0, -2.0])
    np.testing.assert_allclose(endpoint_predict(pp.v_data, pp.x_t, 0.7), x, atol=1e-14)


def test_velocity_to_score_examples():
    np.testing.assert_array_equal(velocity_to_score(np.array([9.0, 9.0]), np.array([0.3, -0.3]), 1.0),
                                  [-0.3, 0.3])
    np.testing.assert_array_equal(velocity_to_score(np.zeros(2), np.array([1.0, 0.0]), 0.5),
                                  [-2.0, 0.0])


def test_velocity_to_score_with_oracle_velocity():
    std = OracleDist.gaussians([(0.0, 0.0)], 1.0)
    x_t = np.array([1.0, 0.0])
    v = std.optimal_velocity(0, x_t, 0.5)
    np.testing.assert_allclose(velocity_to_score(v, x_t, 0.5), [-2.0, 0.0], atol=1e-14)


def test_score_to_velocity_examples():
    for t in (0.0, 0.3, 0.9):
        np.testing.assert_array_equal(score_to_velocity(np.zeros(2), np.zeros(2), t), [0.0, 0.0])
    np.testing.assert_array_equal(score_to_velocity(np.array([-2.0, 0.0]), np.array([1.0, 0.0]), 0.5),
                                  [0.0, 0.0])


def test_singular_times():
    with pytest.raises(SingularTimeError):
        velocity_to_score(np.zeros(2), np.zeros(2), 0.0)
    with pytest.raises(SingularTimeError):
        score_to_velocity(np.zeros(2), np.zeros(2), 1.0)


def test_round_trip_many():
    rng = np.random.default_rng(3)
    v, x_t = rng.standard_normal((2, 10_000, 3))
    s = velocity_to_score(v, x_t, 0.3)
    back = score_to_velocity(s, x_t, 0.3)
    assert np.max(np.abs(back - v) / (np.abs(v) + np.abs(x_t))) < 1e-12


@settings(max_examples=200)
@given(arrays(float, 2, elements=st.floats(-10, 10)), arrays(float, 2, elements=st.floats(-10, 10)),
       st.floats(0.01, 0.99))
def test_round_trip_property(v, x_t, t):
    back = score_to_velocity(velocity_to_score(v, x_t, t), x_t, t)
    np.testing.assert_allclose(back, v, atol=1e-10 * (1 + np.abs(x_t).max() + np.abs(v).max()) / (1 - t))


def test_omega():
    assert omega(0.5) == 1.0
    assert omega(0.0) == 0.0
    assert omega(0.8) == pytest.approx(4.0, rel=1e-14)
    np.testing.assert_allclose(omega(np.array([0.5, 0.8])), [1.0, 4.0])
    with pytest.raises(SingularTimeError):
        omega(1.0)


@given(st.floats(0.0, 0.999))
def test_omega_monotone(t):
    assert omega(t) <= omega(min(t + 1e-3, 0.9999))
