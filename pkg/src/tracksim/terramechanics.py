"""Brush/bristle soil-track interaction on a discretised track footprint.

Every function broadcasts: vehicle quantities may carry a leading batch
dimension, patch coordinates a trailing patch dimension.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import GRAVITY, TerramechParams, VehicleParams
from .errors import DegenerateSprocket

SPROCKET_EPS = 1e-9
SHEAR_VEL_EPS = 1e-9
# Kept for interface parity: the sinc form below is exact through wz = 0.
OMEGA_EPS = 1e-6


@dataclass(frozen=True)
class TrackFootprint:
    side: str
    x: np.ndarray
    y: np.ndarray
    patch_area: float

    @property
    def n(self) -> int:
        return self.x.size


def make_footprint(vp: VehicleParams, side: str) -> TrackFootprint:
    """Cell centres of the (longitudinal x lateral) patch grid, row-major.

    The left track is centred at ``y = +B/2``, the right one at ``-B/2``.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    nl, nw = vp.patches_longitudinal, vp.patches_lateral
    ell, width = vp.track_semilength, vp.track_width
    xs = -ell + (np.arange(nl) + 0.5) * (2 * ell / nl)
    ys = -width / 2 + (np.arange(nw) + 0.5) * (width / nw)
    yc = vp.track_gauge / 2 if side == "left" else -vp.track_gauge / 2
    X, Y = np.meshgrid(xs, ys + yc, indexing="ij")
    return TrackFootprint(side, X.ravel(), Y.ravel(), vp.patch_area)


class ShearDisplacement(NamedTuple):
    jx: np.ndarray
    jy: np.ndarray
    j_mag: np.ndarray


def shear_displacement(x_p, y_p, vx_b, vy_b, wz, w_sprocket, phi, vp: VehicleParams) -> ShearDisplacement:
    """Shear displacement accumulated by a track point between first contact
    at the front of the track (``x = l``) and ``x_p``.

    Closed-form integral of the world-frame shear velocity.  The ``1/wz``
    factor is absorbed into ``sinc``, so the expression stays exact and
    continuous through ``wz = 0``.
    """
    w_sprocket = np.asarray(w_sprocket, dtype=float)
    if np.any(np.abs(w_sprocket) < SPROCKET_EPS):
        raise DegenerateSprocket("sprocket speed below 1e-9 rad/s")
    ell = vp.track_semilength
    wr = w_sprocket * vp.sprocket_radius
    t = (ell - x_p) / wr
    b = vx_b - wz * y_p
    c = vy_b + wz * ell
    half = 0.5 * wz * t
    mid = phi + half
    a = phi + wz * t
    sinc = np.sinc(half / np.pi)
    cm, sm = np.cos(mid), np.sin(mid)
    jx = t * sinc * (b * cm - c * sm) - wr * t * np.cos(a)
    jy = t * sinc * (c * cm + b * sm) - wr * t * np.sin(a)
    return ShearDisplacement(jx, jy, np.hypot(jx, jy))


def shear_displacement_mag(x_p, y_p, vx_b, vy_b, wz, w_sprocket, vp: VehicleParams):
    """Magnitude only (rotation invariant, evaluated at phi = 0)."""
    return shear_displacement(x_p, y_p, vx_b, vy_b, wz, w_sprocket, 0.0, vp).j_mag


def shear_stress(j_mag, sigma, tm: TerramechParams):
    return tm.cohesion_c + sigma * tm.friction_mu * (1.0 - np.exp(-j_mag / tm.shear_modulus_K))


class PatchWrench(NamedTuple):
    dFx_b: np.ndarray
    dFy_b: np.ndarray
    dMz_b: np.ndarray


class TrackWrench(NamedTuple):
    Fx_b: np.ndarray
    Fy_b: np.ndarray
    Mz_b: np.ndarray


def patch_wrench(x_p, y_p, patch_area, vx_b, vy_b, wz, w_sprocket, sigma_patch, tm: TerramechParams,
                 vp: VehicleParams) -> PatchWrench:
    """Tangential force/moment of one (or many) patches, opposing the body-frame
    shear velocity.  Patches with no slide direction contribute nothing."""
    r = vp.sprocket_radius
    jvx = vx_b - wz * y_p - w_sprocket * r
    jvy = vy_b + wz * x_p
    jv = np.hypot(jvx, jvy)
    j = shear_displacement_mag(x_p, y_p, vx_b, vy_b, wz, w_sprocket, vp)
    tau = shear_stress(j, sigma_patch, tm)
    moving = jv >= SHEAR_VEL_EPS
    scale = np.where(moving, -tau * patch_area / np.where(moving, jv, 1.0), 0.0)
    dFx = scale * jvx
    dFy = scale * jvy
    dMz = -y_p * dFx + x_p * dFy
    return PatchWrench(dFx, dFy, dMz)


def track_wrench(footprint: TrackFootprint, vx_b, vy_b, wz, w_sprocket, sigma_per_patch,
                 tm: TerramechParams, vp: VehicleParams) -> TrackWrench:
    """Sum of patch wrenches over a footprint.

    Batched inputs of shape ``(B,)`` are expanded against the patch axis;
    ``sigma_per_patch`` may be a scalar, ``(P,)`` or ``(B, P)``.
    """
    vx_b, vy_b, wz, w_sprocket = (np.asarray(v, dtype=float)[..., None] for v in (vx_b, vy_b, wz, w_sprocket))
    sigma = np.asarray(sigma_per_patch, dtype=float)
    if sigma.ndim >= 1 and sigma.shape[-1] != footprint.n:
        raise ValueError(f"sigma_per_patch has {sigma.shape[-1]} entries, footprint has {footprint.n}")
    pw = patch_wrench(footprint.x, footprint.y, footprint.patch_area, vx_b, vy_b, wz, w_sprocket, sigma, tm, vp)
    return TrackWrench(pw.dFx_b.sum(axis=-1), pw.dFy_b.sum(axis=-1), pw.dMz_b.sum(axis=-1))


def uniform_pressure(vp: VehicleParams, g: float = GRAVITY) -> float:
    return vp.mass * g / (2.0 * vp.track_area)


def contact_stiffness(footprint: TrackFootprint, vx_b, vy_b, wz, w_sprocket, sigma, tm: TerramechParams,
                      vp: VehicleParams) -> np.ndarray:
    """Bound on the eigenvalue magnitude of the body dynamics linearised
    about the current velocity (1/s), used to pick stable explicit substeps.

    Along the slide direction a patch acts like a damper of coefficient
    ``A_p * dtau/dj * t_p``; across it like ``A_p * tau / |j_v|``.  Both
    approach ``A_p*sigma*mu*t_p/K`` at vanishing slip.
    """
    vx_b, vy_b, wz, w = (np.asarray(v, dtype=float)[..., None] for v in (vx_b, vy_b, wz, w_sprocket))
    x, y = footprint.x, footprint.y
    wr = np.where(np.abs(w) < SPROCKET_EPS, SPROCKET_EPS, w) * vp.sprocket_radius
    t_p = np.abs((vp.track_semilength - x) / wr)
    jvx = vx_b - wz * y - wr
    jvy = vy_b + wz * x
    jv = np.hypot(jvx, jvy)
    j = np.hypot(*shear_displacement(x, y, vx_b, vy_b, wz, wr / vp.sprocket_radius, 0.0, vp)[:2])
    smu = sigma * tm.friction_mu
    along = smu * np.exp(-j / tm.shear_modulus_K) / tm.shear_modulus_K * t_p
    across = np.where(jv > SHEAR_VEL_EPS, shear_stress(j, sigma, tm) / np.maximum(jv, SHEAR_VEL_EPS), along)
    gain = footprint.patch_area * np.maximum(along, across)
    return np.sum(gain * (1.0 / vp.mass + (x ** 2 + y ** 2) / vp.izz), axis=-1)


class BothTracks:
    """Left and right footprints stacked into one patch axis, for a fused
    evaluation of both track wrenches (hot path of the simulators)."""

    def __init__(self, vp: VehicleParams):
        self.vp = vp
        left, right = make_footprint(vp, "left"), make_footprint(vp, "right")
        self.left, self.right = left, right
        self.n_left = left.n
        self.x = np.concatenate([left.x, right.x])
        self.y = np.concatenate([left.y, right.y])
        self.is_left = np.arange(self.x.size) < left.n
        self.patch_area = left.patch_area

    def wrenches(self, vx_b, vy_b, wz, wL, wR, sigma, tm: TerramechParams):
        """``(Fx, Fy, Mz)`` of the left and right tracks; same result as two
        :func:`track_wrench` calls.  ``sigma`` is scalar or ``(..., 2P)``."""
        vp = self.vp
        vx = np.asarray(vx_b, dtype=float)[..., None]
        vy = np.asarray(vy_b, dtype=float)[..., None]
        wz = np.asarray(wz, dtype=float)[..., None]
        w = np.where(self.is_left, np.asarray(wL, dtype=float)[..., None], np.asarray(wR, dtype=float)[..., None])
        if np.any(np.abs(w) < SPROCKET_EPS):
            raise DegenerateSprocket("sprocket speed below 1e-9 rad/s")
        x, y = self.x, self.y
        wr = w * vp.sprocket_radius
        t = (vp.track_semilength - x) / wr
        b = vx - wz * y
        c = vy + wz * vp.track_semilength
        half = 0.5 * wz * t
        sinc = np.sinc(half / np.pi)
        cm, sm = np.cos(half), np.sin(half)
        ca, sa = cm * cm - sm * sm, 2.0 * sm * cm
        jx = t * (sinc * (b * cm - c * sm) - wr * ca)
        jy = t * (sinc * (c * cm + b * sm) - wr * sa)
        j = np.sqrt(jx * jx + jy * jy)
        tau = tm.cohesion_c + sigma * tm.friction_mu * (1.0 - np.exp(-j / tm.shear_modulus_K))
        jvx = b - wr
        jvy = vy + wz * x
        jv = np.sqrt(jvx * jvx + jvy * jvy)
        moving = jv >= SHEAR_VEL_EPS
        scale = np.where(moving, -tau * self.patch_area / np.where(moving, jv, 1.0), 0.0)
        fx = scale * jvx
        fy = scale * jvy
        mz = x * fy - y * fx
        n = self.n_left
        return (
            TrackWrench(fx[..., :n].sum(-1), fy[..., :n].sum(-1), mz[..., :n].sum(-1)),
            TrackWrench(fx[..., n:].sum(-1), fy[..., n:].sum(-1), mz[..., n:].sum(-1)),
        )

    def stiffness(self, vx_b, vy_b, wz, wL, wR, sigma, tm: TerramechParams):
        sl = sigma if np.ndim(sigma) == 0 else sigma[..., : self.n_left]
        sr = sigma if np.ndim(sigma) == 0 else sigma[..., self.n_left:]
        return (contact_stiffness(self.left, vx_b, vy_b, wz, wL, sl, tm, self.vp)
                + contact_stiffness(self.right, vx_b, vy_b, wz, wR, sr, tm, self.vp))
