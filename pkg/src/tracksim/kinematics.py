"""Unicycle and pseudo-kinematic (slip-augmented) tracked-vehicle models."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .core import Pose2D, SlipParams, VehicleParams, WheelSpeeds
from .errors import AlphaOutOfRange, AlphaUndefined

V_EPS = 1e-4


class TrackSpeeds(NamedTuple):
    vL_t: float
    vR_t: float


def _pose_parts(pose):
    if isinstance(pose, Pose2D):
        return pose.x, pose.y, pose.phi
    p = np.asarray(pose, dtype=float)
    return p[..., 0], p[..., 1], p[..., 2]


def unicycle_rhs(pose, v, wz) -> np.ndarray:
    _, _, phi = _pose_parts(pose)
    return np.stack(np.broadcast_arrays(v * np.cos(phi), v * np.sin(phi), wz), axis=-1).astype(float)


def tracked_rhs(pose, vx_b, wz, alpha) -> np.ndarray:
    """Pose rate of the pseudo-kinematic model: the planar velocity has
    magnitude ``vx_b / cos(alpha)`` and direction ``phi + alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(np.abs(alpha) >= np.pi / 2):
        raise AlphaOutOfRange(f"|alpha| must be < pi/2, got {alpha}")
    _, _, phi = _pose_parts(pose)
    speed = vx_b / np.cos(alpha)
    return np.stack(
        np.broadcast_arrays(speed * np.cos(phi + alpha), speed * np.sin(phi + alpha), wz), axis=-1
    ).astype(float)


def track_ground_speeds(vx_b, wz, B) -> TrackSpeeds:
    return TrackSpeeds(vx_b - wz * B / 2.0, vx_b + wz * B / 2.0)


def estimate_slip(vx_b, vy_b, wz, w: WheelSpeeds, vp: VehicleParams, v_eps: float = V_EPS) -> SlipParams:
    """Slip parameters from measured body velocities and sprocket speeds.

    ``alpha`` is the raw ``atan2(vy, vx)`` branch value; the forward/backward
    split is left to the identification code.
    """
    vx_b = np.asarray(vx_b, dtype=float)
    if np.any(np.abs(vx_b) <= v_eps):
        raise AlphaUndefined(f"|vx_b| <= {v_eps}: lateral slip angle undefined")
    alpha = np.arctan2(vy_b, vx_b)
    vL, vR = track_ground_speeds(vx_b, wz, vp.track_gauge)
    r = vp.sprocket_radius
    return SlipParams(alpha=alpha, beta_L=vL - w.wL * r, beta_R=vR - w.wR * r)


def slip_arrays(vx_b, vy_b, wz, wL, wR, vp: VehicleParams):
    """Array form of :func:`estimate_slip` that returns NaN alpha where undefined."""
    vx_b = np.asarray(vx_b, dtype=float)
    alpha = np.where(np.abs(vx_b) > V_EPS, np.arctan2(vy_b, vx_b), np.nan)
    vL, vR = track_ground_speeds(vx_b, wz, vp.track_gauge)
    r = vp.sprocket_radius
    return alpha, vL - wL * r, vR - wR * r


def forward_twist(w: WheelSpeeds, vp: VehicleParams, slip: SlipParams | None = None):
    """Body twist produced by sprocket speeds under the slip map (track
    speed = ``w*r + beta``)."""
    r, B = vp.sprocket_radius, vp.track_gauge
    vL = w.wL * r
    vR = w.wR * r
    if slip is not None:
        vL = vL + slip.beta_L
        vR = vR + slip.beta_R
    return (vL + vR) / 2.0, (vR - vL) / B
