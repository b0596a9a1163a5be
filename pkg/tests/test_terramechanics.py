import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from tracksim.core import TerramechParams, VehicleParams
from tracksim.errors import DegenerateSprocket
from tracksim.terramechanics import (
    BothTracks,
    contact_stiffness,
    make_footprint,
    patch_wrench,
    shear_displacement,
    shear_stress,
    track_wrench,
    uniform_pressure,
)

VP = VehicleParams()
TM = TerramechParams(friction_mu=0.4)


def quad_shear(x_p, y_p, vx, vy, wz, w, phi, vp=VP):
    """Integrate the world-frame slip velocity of a track point from the
    front of the track to ``x_p``."""
    ell, wr = vp.track_semilength, w * vp.sprocket_radius
    t_end = (ell - x_p) / wr

    def vel(tau):
        x = ell - wr * tau
        ux, uy = vx - wz * y_p - wr, vy + wz * x
        h = phi + wz * tau
        return np.cos(h) * ux - np.sin(h) * uy, np.sin(h) * ux + np.cos(h) * uy

    opts = dict(epsabs=0.0, epsrel=1e-12, limit=200)
    jx = quad(lambda s: vel(s)[0], 0.0, t_end, **opts)[0]
    jy = quad(lambda s: vel(s)[1], 0.0, t_end, **opts)[0]
    return jx, jy


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.35, 0.35), st.floats(-0.4, 0.4), st.floats(-1, 1), st.floats(-0.5, 0.5),
       st.floats(-3, 3), st.floats(0.5, 15) | st.floats(-15, -0.5), st.floats(-np.pi, np.pi))
def test_closed_form_matches_quadrature(x, y, vx, vy, wz, w, phi):
    sd = shear_displacement(x, y, vx, vy, wz, w, phi, VP)
    jx, jy = quad_shear(x, y, vx, vy, wz, w, phi)
    scale = max(1e-12, abs(VP.track_semilength - x) * (abs(vx) + abs(vy) + abs(wz) + abs(w) * VP.sprocket_radius))
    assert abs(sd.jx - jx) <= 1e-9 * scale
    assert abs(sd.jy - jy) <= 1e-9 * scale


def test_zero_yaw_rate_limit_is_continuous():
    a = shear_displacement(0.1, 0.3, 0.4, 0.05, 0.0, 3.0, 0.2, VP)
    b = shear_displacement(0.1, 0.3, 0.4, 0.05, 1e-9, 3.0, 0.2, VP)
    assert a.jx == pytest.approx(b.jx, abs=1e-9)
    assert a.jy == pytest.approx(b.jy, abs=1e-9)


def test_displacement_vanishes_at_entry_and_without_slip():
    ell = VP.track_semilength
    assert shear_displacement(ell, 0.3, 0.5, 0.0, 0.1, 4.0, 0.0, VP).j_mag == pytest.approx(0.0, abs=1e-15)
    # pure rolling: track speed equals body speed, no yaw
    w = 4.0
    sd = shear_displacement(-0.2, 0.3, w * VP.sprocket_radius, 0.0, 0.0, w, 0.7, VP)
    assert sd.j_mag == pytest.approx(0.0, abs=1e-14)


@given(st.floats(-np.pi, np.pi))
def test_magnitude_is_rotation_invariant(phi):
    a = shear_displacement(0.0, -0.3, 0.3, 0.1, 0.5, 5.0, 0.0, VP).j_mag
    b = shear_displacement(0.0, -0.3, 0.3, 0.1, 0.5, 5.0, phi, VP).j_mag
    assert a == pytest.approx(b, rel=1e-12)


def test_degenerate_sprocket():
    with pytest.raises(DegenerateSprocket):
        shear_displacement(0.0, 0.3, 0.1, 0.0, 0.0, 0.0, 0.0, VP)


@given(st.floats(0, 1), st.floats(0, 1e4))
def test_shear_stress_bounded(j, sigma):
    tau = shear_stress(j, sigma, TM)
    assert 0.0 <= tau <= TM.cohesion_c + sigma * TM.friction_mu + 1e-12


def test_shear_stress_monotone_in_displacement():
    j = np.linspace(0, 0.01, 50)
    assert np.all(np.diff(shear_stress(j, 5000.0, TM)) > 0)


def test_footprint_layout():
    left, right = make_footprint(VP, "left"), make_footprint(VP, "right")
    assert left.n == right.n == VP.n_patches
    assert np.all(left.y > 0) and np.all(right.y < 0)
    assert left.y.mean() == pytest.approx(VP.track_gauge / 2)
    assert left.x.mean() == pytest.approx(0.0, abs=1e-12)
    assert np.abs(left.x).max() < VP.track_semilength
    with pytest.raises(ValueError):
        make_footprint(VP, "middle")


def test_patch_force_opposes_slip_velocity():
    pw = patch_wrench(0.1, 0.3, 0.01, 0.5, 0.2, 0.0, 2.0, 4000.0, TM, VP)
    jvx, jvy = 0.5 - 2.0 * VP.sprocket_radius, 0.2
    assert pw.dFx_b * jvx + pw.dFy_b * jvy < 0
    assert jvx * pw.dFy_b - jvy * pw.dFx_b == pytest.approx(0.0, abs=1e-12)


def test_track_wrench_matches_patch_sum_and_fused():
    fp = make_footprint(VP, "left")
    sigma = uniform_pressure(VP)
    tw = track_wrench(fp, 0.3, 0.02, 0.4, 3.0, sigma, TM, VP)
    pw = patch_wrench(fp.x, fp.y, fp.patch_area, 0.3, 0.02, 0.4, 3.0, sigma, TM, VP)
    assert tw.Fx_b == pytest.approx(pw.dFx_b.sum())
    assert tw.Mz_b == pytest.approx(pw.dMz_b.sum())
    left, right = BothTracks(VP).wrenches(0.3, 0.02, 0.4, 3.0, 5.0, sigma, TM)
    tr = track_wrench(make_footprint(VP, "right"), 0.3, 0.02, 0.4, 5.0, sigma, TM, VP)
    assert np.allclose(left, tw, rtol=1e-10)
    assert np.allclose(right, tr, rtol=1e-10)


def test_track_wrench_batched():
    fp = make_footprint(VP, "right")
    vx = np.array([0.1, 0.3, -0.2])
    tw = track_wrench(fp, vx, 0.0, 0.1, 2.0, 3000.0, TM, VP)
    single = track_wrench(fp, 0.3, 0.0, 0.1, 2.0, 3000.0, TM, VP)
    assert tw.Fx_b.shape == (3,)
    assert tw.Fx_b[1] == pytest.approx(single.Fx_b)
    with pytest.raises(ValueError):
        track_wrench(fp, 0.3, 0.0, 0.1, 2.0, np.ones(7), TM, VP)


def test_traction_bounded_by_friction():
    fp = make_footprint(VP, "left")
    sigma = uniform_pressure(VP)
    tw = track_wrench(fp, 0.0, 0.0, 0.0, 15.0, sigma, TM, VP)
    assert np.hypot(tw.Fx_b, tw.Fy_b) <= sigma * TM.friction_mu * VP.track_area * (1 + 1e-12)
    assert tw.Fx_b > 0


def test_uniform_pressure_supports_weight():
    # track_area is per track
    assert 2 * uniform_pressure(VP) * VP.track_area == pytest.approx(VP.mass * 9.81)


def test_contact_stiffness_positive():
    k = contact_stiffness(make_footprint(VP, "left"), 0.3, 0.0, 0.1, 3.0, 4000.0, TM, VP)
    assert np.all(k > 0)
