"""Domain types, frame conventions and wheel/twist kinematic maps.

Conventions used across the package:

* SI units everywhere.
* Body frame: x forward, y to the left, z up.  The left track centre line
  sits at ``y = +B/2`` and the right one at ``y = -B/2``.
* Orientation uses the ZYX Euler sequence ``R = Rz(yaw) Ry(pitch) Rx(roll)``;
  Euler triples are stored as ``(roll, pitch, yaw)``.
* All operations accept numpy arrays in place of scalars and broadcast over
  leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import GimbalLock

GRAVITY = 9.81
GIMBAL_GUARD = 1e-6


def wrap_angle(a):
    """Wrap angles to [-pi, pi]."""
    return np.arctan2(np.sin(a), np.cos(a))


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 62.0
    inertia_body: tuple = ((2.18, 0.0, 0.0), (0.0, 2.81, 0.0), (0.0, 0.0, 4.5))
    izz: float = 4.5
    com_height: float = 0.25
    track_gauge: float = 0.606
    track_semilength: float = 0.35
    track_area: float = 0.07
    sprocket_radius: float = 0.0856
    rolling_coeff: float = 0.025
    patches_longitudinal: int = 10
    patches_lateral: int = 4

    def __post_init__(self):
        scalars = {
            "mass": self.mass,
            "izz": self.izz,
            "com_height": self.com_height,
            "track_gauge": self.track_gauge,
            "track_semilength": self.track_semilength,
            "track_area": self.track_area,
            "sprocket_radius": self.sprocket_radius,
            "patches_longitudinal": self.patches_longitudinal,
            "patches_lateral": self.patches_lateral,
        }
        for name, value in scalars.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.rolling_coeff < 0:
            raise ValueError("rolling_coeff must be non-negative")
        inertia = np.asarray(self.inertia_body, dtype=float)
        if inertia.shape != (3, 3) or not np.allclose(inertia, inertia.T):
            raise ValueError("inertia_body must be a symmetric 3x3 matrix")
        if np.linalg.eigvalsh(inertia).min() <= 0:
            raise ValueError("inertia_body must be positive definite")

    @property
    def inertia(self) -> np.ndarray:
        return np.asarray(self.inertia_body, dtype=float)

    @property
    def track_length(self) -> float:
        return 2.0 * self.track_semilength

    @property
    def track_width(self) -> float:
        return self.track_area / self.track_length

    @property
    def n_patches(self) -> int:
        return self.patches_longitudinal * self.patches_lateral

    @property
    def patch_area(self) -> float:
        return self.track_area / self.n_patches

    def with_(self, **kw) -> "VehicleParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class TerramechParams:
    friction_mu: float = 0.1
    cohesion_c: float = 0.0
    shear_modulus_K: float = 0.001

    def __post_init__(self):
        if self.friction_mu < 0:
            raise ValueError("friction_mu must be >= 0")
        if self.cohesion_c < 0:
            raise ValueError("cohesion_c must be >= 0")
        # K = 0 is the Coulomb limit; the exponential law is singular there.
        if not self.shear_modulus_K > 0:
            raise ValueError("shear_modulus_K must be > 0")


@dataclass(frozen=True)
class ComplianceParams:
    k_lin: float = 1e5
    d_lin: float = 0.5e4
    k_tor: float = 1e4
    d_tor: float = 5e2
    k_speed_Ktp: float = 0.0

    def __post_init__(self):
        for name in ("k_lin", "d_lin", "k_tor", "d_tor", "k_speed_Ktp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phi", float(wrap_angle(self.phi)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.phi])


@dataclass(frozen=True)
class State2D:
    """Planar pose plus body-frame twist."""

    x: float = 0.0
    y: float = 0.0
    phi: float = 0.0
    vx_b: float = 0.0
    vy_b: float = 0.0
    wz: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phi", float(wrap_angle(self.phi)))

    @property
    def pose(self) -> Pose2D:
        return Pose2D(self.x, self.y, self.phi)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.phi, self.vx_b, self.vy_b, self.wz])

    @classmethod
    def from_array(cls, a) -> "State2D":
        a = np.asarray(a, dtype=float)
        return cls(*(float(v) for v in a[:6]))


@dataclass(frozen=True)
class State3D:
    """Rigid-body state: world COM position, ZYX Euler angles (roll, pitch,
    yaw), body-frame linear and angular velocity."""

    p_com: np.ndarray = field(default_factory=lambda: np.zeros(3))
    euler_zyx: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_body: np.ndarray = field(default_factory=lambda: np.zeros(3))
    w_body: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("p_com", "euler_zyx", "v_body", "w_body"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        euler = wrap_angle(self.euler_zyx)
        if abs(abs(euler[1]) - np.pi / 2) < GIMBAL_GUARD:
            raise GimbalLock(f"pitch {euler[1]} at the ZYX singularity")
        object.__setattr__(self, "euler_zyx", euler)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.p_com, self.euler_zyx, self.v_body, self.w_body])

    @classmethod
    def from_array(cls, a) -> "State3D":
        a = np.asarray(a, dtype=float)
        return cls(a[0:3], a[3:6], a[6:9], a[9:12])


@dataclass(frozen=True)
class WheelSpeeds:
    wL: float
    wR: float


@dataclass(frozen=True)
class SlipParams:
    alpha: float = 0.0
    beta_L: float = 0.0
    beta_R: float = 0.0


class Twist(NamedTuple):
    v: float
    wz: float


def wheels_to_twist(w: WheelSpeeds, vp: VehicleParams) -> Twist:
    r, B = vp.sprocket_radius, vp.track_gauge
    return Twist(r * (w.wL + w.wR) / 2.0, r * (w.wR - w.wL) / B)


def twist_to_wheels(v, wz, vp: VehicleParams, slip: SlipParams | None = None) -> WheelSpeeds:
    """Invert the wheel/twist map.

    With ``slip`` the track speeds are ``w*r + beta``, so the commanded
    sprocket speeds are shifted by ``-beta/r`` to realise ``(v, wz)``.
    """
    r, B = vp.sprocket_radius, vp.track_gauge
    wL = (v - wz * B / 2.0) / r
    wR = (v + wz * B / 2.0) / r
    if slip is not None:
        wL = wL - slip.beta_L / r
        wR = wR - slip.beta_R / r
    return WheelSpeeds(wL, wR)


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rpy_to_rot(euler):
    """World-from-body rotation for ZYX Euler angles stored (roll, pitch, yaw).

    Accepts a batch ``(..., 3)`` and returns ``(..., 3, 3)``.
    """
    e = np.asarray(euler, dtype=float)
    cr, sr = np.cos(e[..., 0]), np.sin(e[..., 0])
    cp, sp = np.cos(e[..., 1]), np.sin(e[..., 1])
    cy, sy = np.cos(e[..., 2]), np.sin(e[..., 2])
    R = np.empty(e.shape[:-1] + (3, 3))
    R[..., 0, 0] = cy * cp
    R[..., 0, 1] = cy * sp * sr - sy * cr
    R[..., 0, 2] = cy * sp * cr + sy * sr
    R[..., 1, 0] = sy * cp
    R[..., 1, 1] = sy * sp * sr + cy * cr
    R[..., 1, 2] = sy * sp * cr - cy * sr
    R[..., 2, 0] = -sp
    R[..., 2, 1] = cp * sr
    R[..., 2, 2] = cp * cr
    return R


def rot_to_rpy(R):
    """Inverse of :func:`rpy_to_rot` (away from the pitch singularity)."""
    R = np.asarray(R, dtype=float)
    roll = np.arctan2(R[..., 2, 1], R[..., 2, 2])
    pitch = np.arctan2(-R[..., 2, 0], np.hypot(R[..., 2, 1], R[..., 2, 2]))
    yaw = np.arctan2(R[..., 1, 0], R[..., 0, 0])
    return np.stack([roll, pitch, yaw], axis=-1)


def euler_rate_map(euler_zyx) -> np.ndarray:
    """Matrix T with ``w_body = T @ d/dt(roll, pitch, yaw)``.

    det T = cos(pitch); raises GimbalLock within 1e-6 rad of pitch = +-pi/2.
    """
    e = np.asarray(euler_zyx, dtype=float)
    pitch = e[..., 1]
    if np.any(np.abs(np.cos(pitch)) < np.sin(GIMBAL_GUARD)):
        raise GimbalLock("pitch within 1e-6 rad of +-pi/2")
    cr, sr = np.cos(e[..., 0]), np.sin(e[..., 0])
    cp, sp = np.cos(pitch), np.sin(pitch)
    T = np.zeros(e.shape[:-1] + (3, 3))
    T[..., 0, 0] = 1.0
    T[..., 0, 2] = -sp
    T[..., 1, 1] = cr
    T[..., 1, 2] = sr * cp
    T[..., 2, 1] = -sr
    T[..., 2, 2] = cr * cp
    return T


def euler_rates(euler_zyx, w_body) -> np.ndarray:
    """Closed-form ``T(euler)^-1 @ w_body``, batched."""
    e = np.asarray(euler_zyx, dtype=float)
    w = np.asarray(w_body, dtype=float)
    pitch = e[..., 1]
    cp = np.cos(pitch)
    if np.any(np.abs(cp) < np.sin(GIMBAL_GUARD)):
        raise GimbalLock("pitch within 1e-6 rad of +-pi/2")
    cr, sr = np.cos(e[..., 0]), np.sin(e[..., 0])
    tp = np.tan(pitch)
    wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]
    droll = wx + tp * (sr * wy + cr * wz)
    dpitch = cr * wy - sr * wz
    dyaw = (sr * wy + cr * wz) / cp
    return np.stack([droll, dpitch, dyaw], axis=-1)


def body_accel_in_moving_frame(v_body, w_body, vdot_body) -> np.ndarray:
    """Absolute acceleration of a body-frame vector, expressed in the body frame."""
    return np.asarray(vdot_body, dtype=float) + np.cross(w_body, v_body)
