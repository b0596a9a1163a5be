import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tracksim.core import SlipParams, VehicleParams, WheelSpeeds
from tracksim.errors import AlphaOutOfRange, AlphaUndefined
from tracksim.kinematics import (
    estimate_slip,
    forward_twist,
    slip_arrays,
    track_ground_speeds,
    tracked_rhs,
    unicycle_rhs,
)

VP = VehicleParams()


@given(st.floats(-1, 1), st.floats(-2, 2), st.floats(-np.pi, np.pi))
def test_tracked_reduces_to_unicycle_without_slip(v, wz, phi):
    assert np.allclose(tracked_rhs([0, 0, phi], v, wz, 0.0), unicycle_rhs([0, 0, phi], v, wz))


@given(st.floats(0.01, 1), st.floats(-1.4, 1.4), st.floats(-np.pi, np.pi))
def test_lateral_slip_keeps_forward_component(vx, alpha, phi):
    d = tracked_rhs([0, 0, phi], vx, 0.0, alpha)
    # projection of the planar velocity on the body x axis is vx
    assert d[0] * np.cos(phi) + d[1] * np.sin(phi) == pytest.approx(vx, rel=1e-9)
    assert np.arctan2(-d[0] * np.sin(phi) + d[1] * np.cos(phi), vx) == pytest.approx(alpha, abs=1e-9)


def test_alpha_out_of_range():
    with pytest.raises(AlphaOutOfRange):
        tracked_rhs([0, 0, 0], 0.2, 0.0, np.pi / 2)


def test_estimate_slip_inverts_forward_twist():
    w = WheelSpeeds(3.0, 4.5)
    slip = SlipParams(0.05, -0.01, 0.02)
    vx, wz = forward_twist(w, VP, slip)
    vy = vx * np.tan(slip.alpha)
    est = estimate_slip(vx, vy, wz, w, VP)
    assert est.alpha == pytest.approx(slip.alpha)
    assert est.beta_L == pytest.approx(slip.beta_L)
    assert est.beta_R == pytest.approx(slip.beta_R)


def test_estimate_slip_undefined_near_standstill():
    with pytest.raises(AlphaUndefined):
        estimate_slip(1e-5, 0.0, 0.0, WheelSpeeds(1.0, 1.0), VP)
    a, _, _ = slip_arrays(np.array([1e-5, 0.2]), 0.01, 0.0, 1.0, 1.0, VP)
    assert np.isnan(a[0]) and np.isfinite(a[1])


def test_track_ground_speeds():
    s = track_ground_speeds(0.4, 1.0, VP.track_gauge)
    assert s.vL_t == pytest.approx(0.4 - VP.track_gauge / 2)
    assert s.vR_t == pytest.approx(0.4 + VP.track_gauge / 2)
