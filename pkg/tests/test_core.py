import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracksim.core import (
    ComplianceParams,
    Pose2D,
    SlipParams,
    State2D,
    State3D,
    TerramechParams,
    VehicleParams,
    WheelSpeeds,
    euler_rate_map,
    euler_rates,
    rot_to_rpy,
    rot_x,
    rot_y,
    rot_z,
    rpy_to_rot,
    twist_to_wheels,
    wheels_to_twist,
    wrap_angle,
)
from tracksim.errors import GimbalLock

VP = VehicleParams()
angles = st.floats(-np.pi, np.pi, allow_nan=False)
speeds = st.floats(-2.0, 2.0, allow_nan=False)


def test_vehicle_defaults():
    assert VP.n_patches == 40
    assert VP.track_length == pytest.approx(0.7)
    assert VP.patch_area * VP.n_patches == pytest.approx(VP.track_area)


@pytest.mark.parametrize("kw", [{"mass": 0.0}, {"track_gauge": -1.0}, {"rolling_coeff": -0.1},
                                {"inertia_body": ((1, 0, 0), (0, -1, 0), (0, 0, 1))}])
def test_vehicle_rejects_bad_values(kw):
    with pytest.raises(ValueError):
        VehicleParams(**kw)


def test_param_validation():
    with pytest.raises(ValueError):
        TerramechParams(shear_modulus_K=0.0)
    with pytest.raises(ValueError):
        TerramechParams(friction_mu=-0.1)
    with pytest.raises(ValueError):
        ComplianceParams(k_lin=-1.0)


@given(st.floats(-50, 50, allow_nan=False))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -np.pi - 1e-12 <= w <= np.pi + 1e-12
    assert np.cos(w) == pytest.approx(np.cos(a), abs=1e-9)
    assert np.sin(w) == pytest.approx(np.sin(a), abs=1e-9)


def test_pose_and_state_wrap_heading():
    assert Pose2D(0, 0, 3 * np.pi).phi == pytest.approx(np.pi)
    s = State2D(1, 2, -3 * np.pi, 0.1, 0.2, 0.3)
    assert np.allclose(State2D.from_array(s.as_array()).as_array(), s.as_array())


def test_state3d_gimbal_guard():
    with pytest.raises(GimbalLock):
        State3D(euler_zyx=[0.0, np.pi / 2, 0.0])
    s = State3D(np.arange(3.0), [0.1, 0.2, 0.3], [1, 0, 0], [0, 0, 1])
    assert np.allclose(State3D.from_array(s.as_array()).as_array(), s.as_array())


@given(speeds, speeds)
def test_twist_wheel_roundtrip(v, wz):
    w = twist_to_wheels(v, wz, VP)
    t = wheels_to_twist(w, VP)
    assert t.v == pytest.approx(v, abs=1e-12)
    assert t.wz == pytest.approx(wz, abs=1e-12)


def test_twist_to_wheels_shifts_by_beta():
    w0 = twist_to_wheels(0.3, 0.2, VP)
    w1 = twist_to_wheels(0.3, 0.2, VP, SlipParams(0.0, 0.01, -0.02))
    assert w0.wL - w1.wL == pytest.approx(0.01 / VP.sprocket_radius)
    assert w0.wR - w1.wR == pytest.approx(-0.02 / VP.sprocket_radius)


def test_left_track_is_at_positive_y():
    # right sprocket faster turns left (positive yaw rate)
    assert wheels_to_twist(WheelSpeeds(1.0, 2.0), VP).wz > 0


@given(angles, st.floats(-1.5, 1.5), angles)
def test_rotation_roundtrip(r, p, y):
    R = rpy_to_rot([r, p, y])
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0)
    assert np.allclose(R, rot_z(y) @ rot_y(p) @ rot_x(r), atol=1e-12)
    assert np.allclose(rpy_to_rot(rot_to_rpy(R)), R, atol=1e-10)


@settings(max_examples=50)
@given(angles, st.floats(-1.4, 1.4), angles, st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_euler_rates_inverse_of_rate_map(r, p, y, wx, wy, wz):
    e = np.array([r, p, y])
    w = np.array([wx, wy, wz])
    assert np.allclose(euler_rate_map(e) @ euler_rates(e, w), w, atol=1e-9)


def test_euler_rates_match_finite_difference():
    e = np.array([0.2, -0.3, 1.0])
    w = np.array([0.4, -0.1, 0.7])
    h = 1e-6
    R = rpy_to_rot(e)
    # body-frame angular velocity: R^T dR/dt = [w]x
    dR = (rpy_to_rot(e + h * euler_rates(e, w)) - rpy_to_rot(e - h * euler_rates(e, w))) / (2 * h)
    W = R.T @ dR
    assert np.allclose([W[2, 1], W[0, 2], W[1, 0]], w, atol=1e-6)


def test_euler_rates_gimbal_lock():
    with pytest.raises(GimbalLock):
        euler_rates([0.0, np.pi / 2, 0.0], [0.0, 0.0, 1.0])


def test_batched_rotation():
    e = np.random.default_rng(0).uniform(-1, 1, (5, 3))
    R = rpy_to_rot(e)
    assert R.shape == (5, 3, 3)
    assert np.allclose(R[2], rpy_to_rot(e[2]))
