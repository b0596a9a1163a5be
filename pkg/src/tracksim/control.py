"""Lyapunov trajectory-tracking laws: the unicycle controller (UC) and the
slippage-aware controller (SLC) with lateral-slip compensation and
longitudinal-slip feed-forward."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .core import SlipParams, VehicleParams, WheelSpeeds, rpy_to_rot, twist_to_wheels, wrap_angle
from .errors import AlphaOutOfRange
from .kinematics import tracked_rhs, unicycle_rhs

COS_GUARD = 0.05
ALPHA_RATE_CUTOFF_HZ = 10.0
FEEDFORWARD_ITERS = 4


@dataclass(frozen=True)
class ReferencePoint:
    x_d: float
    y_d: float
    phi_d: float
    v_d: float
    wz_d: float


@dataclass(frozen=True)
class Gains:
    k_p: float = 10.0
    k_phi: float = 1.0

    def __post_init__(self):
        if not (self.k_p > 0 and self.k_phi > 0):
            raise ValueError("gains must be strictly positive")


class Diagnostics(NamedTuple):
    e_xy: np.ndarray
    e_phi: np.ndarray
    V: np.ndarray
    alpha_used: np.ndarray


class ControlOutput(NamedTuple):
    v_cmd: np.ndarray
    wz_cmd: np.ndarray
    wheels: WheelSpeeds
    diagnostics: Diagnostics


class TrackingError(NamedTuple):
    """Position error ``(e_x, e_y)`` and the headings it is measured against.

    World-frame errors carry the actual heading ``phi``; body-frame errors
    use ``phi = 0`` and ``phi_d = -e_phi``.
    """

    e_x: np.ndarray
    e_y: np.ndarray
    phi: np.ndarray
    e_phi: np.ndarray


def world_error(pose, ref: ReferencePoint) -> TrackingError:
    p = np.asarray(pose, dtype=float)
    x, y, phi = p[..., 0], p[..., 1], p[..., 2]
    return TrackingError(x - ref.x_d, y - ref.y_d, phi, wrap_angle(phi - ref.phi_d))


def guarded_cos(a):
    """``cos(a)`` with magnitude floored at 0.05, sign preserved."""
    c = np.cos(a)
    return np.where(np.abs(c) < COS_GUARD, np.where(c < 0, -COS_GUARD, COS_GUARD), c)


def saturate(v, wz, vp: VehicleParams, w_max, slip: SlipParams | None = None):
    """Scale ``(v, wz)`` by a common factor so the sprocket commands stay
    within ``w_max``; the curvature ``wz/v`` is preserved.  When the slip
    offsets alone exceed the bound the wheels are clipped."""
    w0 = twist_to_wheels(v, wz, vp)
    if w_max is None:
        return v, wz, twist_to_wheels(v, wz, vp, slip)
    r = vp.sprocket_radius
    bL = 0.0 if slip is None else np.asarray(slip.beta_L) / r
    bR = 0.0 if slip is None else np.asarray(slip.beta_R) / r
    s = np.ones(np.broadcast(np.asarray(v), np.asarray(wz)).shape)
    for w, b in ((np.asarray(w0.wL), bL), (np.asarray(w0.wR), bR)):
        # largest s in [0, 1] with |s*w - b| <= w_max
        with np.errstate(divide="ignore", invalid="ignore"):
            hi = np.where(w > 0, (w_max + b) / w, np.where(w < 0, (-w_max + b) / w, np.inf))
        s = np.minimum(s, np.maximum(hi, 0.0))
    v_s, wz_s = s * v, s * wz
    w = twist_to_wheels(v_s, wz_s, vp, slip)
    wheels = WheelSpeeds(np.clip(w.wL, -w_max, w_max), np.clip(w.wR, -w_max, w_max))
    return v_s, wz_s, wheels


def uc_law(err: TrackingError, ref: ReferencePoint, gains: Gains):
    """Auxiliary inputs of the unicycle controller: returns ``(v, wz, V)``."""
    e_x, e_y, phi, e_phi = err
    e_xy = np.hypot(e_x, e_y)
    psi = np.arctan2(e_y, e_x)
    beta = 2.0 * phi - e_phi  # phi + phi_d, on the branch consistent with e_phi
    dv = -gains.k_p * e_xy * np.cos(psi - phi)
    dw = -ref.v_d * e_xy * np.sin(psi - beta / 2.0) / guarded_cos(e_phi / 2.0) - gains.k_phi * np.sin(e_phi)
    V = 0.5 * e_xy**2 + (1.0 - np.cos(e_phi))
    return ref.v_d + dv, ref.wz_d + dw, V


def slc_law(err: TrackingError, ref: ReferencePoint, gains: Gains, alpha, alpha_d, alpha_d_rate):
    """Auxiliary inputs of the slippage-aware controller: returns ``(v, wz, V)``."""
    e_x, e_y, phi, e_phi = err
    e_xy = np.hypot(e_x, e_y)
    psi = np.arctan2(e_y, e_x)
    beta = 2.0 * phi - e_phi
    dv = -gains.k_p * e_xy * np.cos(psi - (phi + alpha))
    dw = (-ref.v_d * e_xy * np.sin(psi - (alpha + beta) / 2.0) / guarded_cos((alpha + e_phi) / 2.0)
          - gains.k_phi * np.sin(e_phi + alpha_d) - alpha_d_rate)
    V = 0.5 * e_xy**2 + (1.0 - np.cos(e_phi + alpha_d))
    return (ref.v_d + dv) * np.cos(alpha), ref.wz_d + dw, V


def uc_step(pose, ref: ReferencePoint, gains: Gains = Gains(), vp: VehicleParams = VehicleParams(),
            w_max=None, err: TrackingError | None = None) -> ControlOutput:
    err = world_error(pose, ref) if err is None else err
    v, wz, V = uc_law(err, ref, gains)
    v, wz, wheels = saturate(v, wz, vp, w_max)
    return ControlOutput(v, wz, wheels, Diagnostics(np.hypot(err.e_x, err.e_y), err.e_phi, V, np.zeros_like(V)))


def desired_wheels(ref: ReferencePoint, vp: VehicleParams) -> WheelSpeeds:
    return twist_to_wheels(ref.v_d, ref.wz_d, vp)


def slc_step(pose, ref: ReferencePoint, gains: Gains, slip_models, vp: VehicleParams = VehicleParams(),
             vx_sign=None, alpha_d_rate=0.0, w_actual: WheelSpeeds | None = None, g_hat=None, w_max=None,
             err: TrackingError | None = None) -> ControlOutput:
    """Slippage-aware step.

    ``alpha_d`` comes from the slip model at the desired wheel speeds; the
    compensated ``alpha`` from the actual wheels when given, else from the
    desired ones.  The ``beta`` feed-forward is evaluated at the wheel
    speeds it produces (a short fixed-point iteration).
    """
    err = world_error(pose, ref) if err is None else err
    wd = desired_wheels(ref, vp)
    sign_d = np.where(np.asarray(ref.v_d) < 0, -1.0, 1.0)
    alpha_d, _, _ = slip_models.predict(wd.wL, wd.wR, sign_d if vx_sign is None else vx_sign, g_hat)
    if w_actual is None:
        alpha = alpha_d
    else:
        alpha, _, _ = slip_models.predict(w_actual.wL, w_actual.wR, vx_sign, g_hat)
    if np.any(np.abs(alpha) >= np.pi / 2) or np.any(np.abs(alpha_d) >= np.pi / 2):
        raise AlphaOutOfRange("predicted lateral slip outside (-pi/2, pi/2)")
    v, wz, V = slc_law(err, ref, gains, alpha, alpha_d, alpha_d_rate)
    # beta depends on the wheel speeds it offsets: fixed point from the no-slip wheels
    w = twist_to_wheels(v, wz, vp)
    for _ in range(FEEDFORWARD_ITERS):
        _, bL, bR = slip_models.predict(w.wL, w.wR, vx_sign, g_hat)
        w = twist_to_wheels(v, wz, vp, SlipParams(alpha, bL, bR))
    v, wz, wheels = saturate(v, wz, vp, w_max, SlipParams(alpha, bL, bR))
    return ControlOutput(v, wz, wheels, Diagnostics(np.hypot(err.e_x, err.e_y), err.e_phi, V, alpha))


class AlphaRateFilter:
    """Backward difference of ``alpha_d`` followed by a one-pole low-pass."""

    def __init__(self, dt_ctrl: float, cutoff_hz: float = ALPHA_RATE_CUTOFF_HZ):
        if not dt_ctrl > 0:
            raise ValueError("dt_ctrl must be positive")
        self.dt = dt_ctrl
        self.gain = dt_ctrl / (dt_ctrl + 1.0 / (2.0 * np.pi * cutoff_hz))
        self.reset()

    def reset(self):
        self._prev = None
        self._y = 0.0

    def __call__(self, alpha_d):
        alpha_d = np.asarray(alpha_d, dtype=float)
        if self._prev is None:
            self._prev = alpha_d
            self._y = np.zeros_like(alpha_d)
            return self._y
        raw = (alpha_d - self._prev) / self.dt
        self._prev = alpha_d
        self._y = self._y + self.gain * (raw - self._y)
        return self._y


def alpha_d_rate(alpha_d_stream, dt_ctrl: float, cutoff_hz: float = ALPHA_RATE_CUTOFF_HZ) -> np.ndarray:
    """Filtered rate for a whole stream of ``alpha_d`` samples."""
    f = AlphaRateFilter(dt_ctrl, cutoff_hz)
    return np.array([f(a) for a in np.asarray(alpha_d_stream, dtype=float)])


class BodyError(NamedTuple):
    e_body: np.ndarray
    e_phi_body: np.ndarray


def map_error_3d(state, ref: ReferencePoint) -> BodyError:
    """Tracking error expressed in the body frame.

    The world position error ``[e_x, e_y, 0]`` is rotated by ``R_b^T`` and
    its z component dropped; the heading error is the z component of the
    rotation taking the desired heading frame to the body frame.
    """
    x = state.as_array() if hasattr(state, "as_array") else np.asarray(state, dtype=float)
    R = rpy_to_rot(x[..., 3:6])
    e = np.stack(np.broadcast_arrays(x[..., 0] - ref.x_d, x[..., 1] - ref.y_d, np.zeros_like(x[..., 0])), axis=-1)
    eb = np.einsum("...ji,...j->...i", R, e)
    # body x axis seen in the desired heading frame
    c, s = np.cos(ref.phi_d), np.sin(ref.phi_d)
    bx, by = R[..., 0, 0], R[..., 1, 0]
    e_phi = np.arctan2(-s * bx + c * by, c * bx + s * by)
    return BodyError(eb[..., :2], e_phi)


def body_tracking_error(state, ref: ReferencePoint) -> TrackingError:
    be = map_error_3d(state, ref)
    return TrackingError(be.e_body[..., 0], be.e_body[..., 1], np.zeros_like(be.e_phi_body), be.e_phi_body)


@dataclass
class Controller:
    """Stateful wrapper used by the closed-loop harness (one per episode)."""

    kind: str
    vp: VehicleParams
    gains: Gains = Gains()
    slip_models: object = None
    dt_ctrl: float = 0.005
    w_max: float | None = None
    use_actual_wheels: bool = True

    def __post_init__(self):
        if self.kind not in ("UC", "SLC"):
            raise ValueError("controller kind must be 'UC' or 'SLC'")
        if self.kind == "SLC" and self.slip_models is None:
            raise ValueError("SLC needs slip models")
        self.filter = AlphaRateFilter(self.dt_ctrl)

    def __call__(self, pose, ref: ReferencePoint, w_actual=None, g_hat=None, err=None) -> ControlOutput:
        if self.kind == "UC":
            return uc_step(pose, ref, self.gains, self.vp, self.w_max, err)
        wd = desired_wheels(ref, self.vp)
        sign_d = np.where(np.asarray(ref.v_d) < 0, -1.0, 1.0)
        a_d, _, _ = self.slip_models.predict(wd.wL, wd.wR, sign_d, g_hat)
        rate = self.filter(a_d)
        return slc_step(pose, ref, self.gains, self.slip_models, self.vp, None, rate,
                        w_actual if self.use_actual_wheels else None, g_hat, self.w_max, err)


def simulate_ideal(law: Callable, ref_twist: Callable, x0, t_end: float, dt: float, t0: float = 0.0):
    """Closed loop on the pseudo-kinematic plant with the reference unicycle
    integrated alongside and the law evaluated at every RK4 stage.

    ``law(pose, ref, t)`` returns ``(v, wz, alpha_plant)``; ``ref_twist(t)``
    returns ``(v_d, wz_d)``.  Returns times and stacked ``[x, y, phi, x_d,
    y_d, phi_d]`` states.  ``x0`` is the plant pose (reference starting at
    the origin) or a full 6-vector to continue a previous segment.
    """
    def rhs(s, t):
        v_d, w_d = ref_twist(t)
        ref = ReferencePoint(s[3], s[4], s[5], v_d, w_d)
        v, wz, alpha = law(s[:3], ref, t)
        return np.concatenate([tracked_rhs(s[:3], v, wz, alpha), unicycle_rhs(s[3:], v_d, w_d)])

    from .integrator import RK4, step

    n = int(round((t_end - t0) / dt))
    s = np.asarray(x0, dtype=float)
    if s.size == 3:
        s = np.concatenate([s, np.zeros(3)])
    out = np.empty((n + 1, 6))
    out[0] = s
    for k in range(n):
        s = step(RK4, rhs, s, t0 + k * dt, dt)
        out[k + 1] = s
    return t0 + np.arange(n + 1) * dt, out
