"""Sloped-terrain Newton-Euler simulator with uniform or nonuniform
normal-load models.

State layout (12 values): world COM position, Euler angles
(roll, pitch, yaw), body linear velocity, body angular velocity.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import integrator
from .core import GIMBAL_GUARD, GRAVITY, ComplianceParams, State3D, TerramechParams, VehicleParams, euler_rates, rpy_to_rot
from .dynamics2d import FlatSimulator
from .errors import GimbalLock, NumericalDivergence, OutOfTerrain
from .terrain import HeightField, patch_body_points, surface
from .terramechanics import BothTracks, uniform_pressure

MODES = ("uniform", "nonuniform")


@dataclass(frozen=True)
class NormalLoadModel:
    mode: str = "uniform"
    compliance: ComplianceParams = field(default_factory=ComplianceParams)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass(frozen=True)
class SlopeSimConfig:
    vp: VehicleParams = field(default_factory=VehicleParams)
    tm: TerramechParams = field(default_factory=TerramechParams)
    load: NormalLoadModel = field(default_factory=NormalLoadModel)
    dt_sim: float = 0.001
    dt_ctrl: float = 0.005
    actuator_noise_std: float = 0.0
    rng_seed: int = 0
    tableau: str = "rk4"
    substeps: int | str = "auto"

    def __post_init__(self):
        if not self.dt_sim > 0:
            raise ValueError("dt_sim must be positive")
        if not self.dt_ctrl >= self.dt_sim:
            raise ValueError("dt_ctrl must be >= dt_sim")
        if self.tableau not in integrator.TABLEAUS:
            raise ValueError(f"unknown tableau {self.tableau!r}")
        if self.load.compliance.d_lin * self.dt_sim / self.vp.mass > 0.1:
            warnings.warn("terrain damping too large for dt_sim: D_t*dt/m > 0.1", stacklevel=2)


def _cross(a, b):
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def _matvec(R, v):
    return np.einsum("...ij,...j->...i", R, v)


def rotation_log(R) -> np.ndarray:
    """Rotation vector of ``R`` (axis times angle), batched."""
    R = np.asarray(R, dtype=float)
    tr = R[..., 0, 0] + R[..., 1, 1] + R[..., 2, 2]
    angle = np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))
    w = np.stack([R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0], R[..., 1, 0] - R[..., 0, 1]], axis=-1)
    s = np.sin(angle)
    scale = np.where(s > 1e-9, angle / (2.0 * np.where(s > 1e-9, s, 1.0)), 0.5)
    return scale[..., None] * w


class PatchContact(NamedTuple):
    p_world: np.ndarray
    p_dot_world: np.ndarray
    penetration_rho: np.ndarray
    rho_dot: np.ndarray
    f_n_world: np.ndarray
    sigma: np.ndarray


class NormalWrench(NamedTuple):
    F_n: np.ndarray
    M_n: np.ndarray


def _split(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0:3], x[..., 3:6], x[..., 6:9], x[..., 9:12]


def normal_force_uniform(x, hf: HeightField, compliance: ComplianceParams, vp: VehicleParams) -> NormalWrench:
    """Resultant terrain reaction (world frame) under the uniform-load model.

    A linear spring-damper acts along the terrain normal below the COM while
    the track-level point is inside the terrain; the tangential components of
    a torsional spring-damper align the body with the terrain.
    """
    x = x.as_array() if isinstance(x, State3D) else np.asarray(x, dtype=float)
    p, euler, v, w = _split(x)
    R = rpy_to_rot(euler)
    elev, gx, gy, hit = surface(hf, p[..., 0], p[..., 1])
    if not np.all(hit):
        raise OutOfTerrain("COM left the heightfield")
    inv = 1.0 / np.sqrt(gx * gx + gy * gy + 1.0)
    n = np.stack([-gx * inv, -gy * inv, inv], axis=-1)
    p_t = np.stack([p[..., 0], p[..., 1], elev], axis=-1)
    d = p_t - (p - vp.com_height * R[..., :, 2])
    v_w = _matvec(R, v)
    pen = np.sum(n * d, axis=-1)
    mag = np.sum(n * (compliance.k_lin * d - compliance.d_lin * v_w), axis=-1)
    mag = np.where(pen > 0, np.maximum(mag, 0.0), 0.0)
    F = n * mag[..., None]
    # terrain frame sharing the body heading (see terrain.terrain_frame)
    yaw = euler[..., 2]
    h = np.stack([np.cos(yaw), np.sin(yaw), np.zeros_like(yaw)], axis=-1)
    tx = h - np.sum(h * n, axis=-1, keepdims=True) * n
    tx = tx / np.sqrt(np.sum(tx * tx, axis=-1, keepdims=True))
    Rt = np.stack([tx, _cross(n, tx), n], axis=-1)
    e = rotation_log(Rt @ np.swapaxes(R, -1, -2))
    tau = compliance.k_tor * e - compliance.d_tor * _matvec(R, w)
    M = tau - n * np.sum(n * tau, axis=-1, keepdims=True)
    return NormalWrench(F, M)


def patch_stiffness(k_lin: float, k_speed: float, x_patch, vx_b, ell: float):
    """Speed-dependent patch stiffness ``K_t [1 + K_tp vx (x + sign(vx) l)]``."""
    vx_b = np.asarray(vx_b, dtype=float)[..., None]
    return k_lin * (1.0 + k_speed * vx_b * (x_patch + np.sign(vx_b) * ell))


def patch_contacts_nonuniform(x, hf: HeightField, compliance: ComplianceParams, vp: VehicleParams,
                              body_points: np.ndarray | None = None) -> PatchContact:
    """Per-patch penetration and normal force along world z.

    Stiffness and damping are scaled by ``A_p / (2 A_t)`` so a uniformly
    penetrated footprint has total stiffness ``k_lin`` and damping ``d_lin``.
    The penetration rate is taken relative to the local surface, so a patch
    sliding along an incline without sinking is not damped.
    """
    x = x.as_array() if isinstance(x, State3D) else np.asarray(x, dtype=float)
    b = patch_body_points(vp) if body_points is None else body_points
    p, euler, v, w = _split(x)
    R = rpy_to_rot(euler)
    rb = np.einsum("...ij,pj->...pi", R, b)
    pw = p[..., None, :] + rb
    v_patch = v[..., None, :] + _cross(w[..., None, :], b)
    pdot = np.einsum("...ij,...pj->...pi", R, v_patch)
    elev, gx, gy, hit = surface(hf, pw[..., 0], pw[..., 1])
    if not np.all(hit):
        raise OutOfTerrain("track footprint left the heightfield")
    rho = elev - pw[..., 2]
    rho_dot = gx * pdot[..., 0] + gy * pdot[..., 1] - pdot[..., 2]
    scale = vp.patch_area / (2.0 * vp.track_area)
    k = patch_stiffness(compliance.k_lin, compliance.k_speed_Ktp, b[:, 0], v[..., 0], vp.track_semilength) * scale
    d = compliance.d_lin * scale
    inside = rho > 0
    fz = np.where(inside, k * rho + np.where(rho_dot > 0, d * rho_dot, 0.0), 0.0)
    fz = np.maximum(fz, 0.0)
    f = np.zeros(fz.shape + (3,))
    f[..., 2] = fz
    sigma = np.maximum(R[..., None, 2, 2] * fz, 0.0) / vp.patch_area
    return PatchContact(pw, pdot, rho, rho_dot, f, sigma)


def rolling_resistance(f_n_mag, track_speed, c_r: float):
    """Load-dependent rolling resistance of one track, signed with the track
    speed (``sign(0) = 0``)."""
    return np.sum(f_n_mag, axis=-1) * c_r * np.sign(track_speed)


class SlopeModel:
    def __init__(self, cfg: SlopeSimConfig, hf: HeightField, g: float = GRAVITY):
        self.cfg, self.hf, self.g = cfg, hf, g
        self.vp, self.tm, self.load = cfg.vp, cfg.tm, cfg.load
        self.tracks = BothTracks(self.vp)
        self.body_points = patch_body_points(self.vp)
        self.n_left = self.tracks.n_left
        self.sigma_uniform = uniform_pressure(self.vp, g)
        self.inertia = self.vp.inertia
        self.inertia_inv = np.linalg.inv(self.inertia)

    def contacts(self, x):
        """Normal wrench (world), per-patch pressures and per-track loads."""
        vp, comp = self.vp, self.load.compliance
        if self.load.mode == "uniform":
            nw = normal_force_uniform(x, self.hf, comp, vp)
            load = np.linalg.norm(nw.F_n, axis=-1) / 2.0
            return nw, self.sigma_uniform, load, load, None
        pc = patch_contacts_nonuniform(x, self.hf, comp, vp, self.body_points)
        p = np.asarray(x, dtype=float)[..., 0:3]
        F = pc.f_n_world.sum(axis=-2)
        M = _cross(pc.p_world - p[..., None, :], pc.f_n_world).sum(axis=-2)
        fz = pc.f_n_world[..., 2]
        nl = self.n_left
        return NormalWrench(F, M), pc.sigma, fz[..., :nl], fz[..., nl:], pc

    def rhs(self, x, wL, wR):
        x = np.asarray(x, dtype=float)
        vp = self.vp
        p, euler, v, w = _split(x)
        R = rpy_to_rot(euler)
        Rt = np.swapaxes(R, -1, -2)
        nw, sigma, load_l, load_r, _ = self.contacts(x)
        vx, vy, wz = v[..., 0], v[..., 1], w[..., 2]
        L, Rr = self.tracks.wrenches(vx, vy, wz, wL, wR, sigma, self.tm)
        half = vp.track_gauge / 2.0
        if self.load.mode == "uniform":
            res_l = load_l * vp.rolling_coeff * np.sign(vx - wz * half)
            res_r = load_r * vp.rolling_coeff * np.sign(vx + wz * half)
        else:
            res_l = rolling_resistance(load_l, vx - wz * half, vp.rolling_coeff)
            res_r = rolling_resistance(load_r, vx + wz * half, vp.rolling_coeff)
        F = np.einsum("...ij,...j->...i", Rt, nw.F_n)
        F = F - vp.mass * self.g * Rt[..., :, 2]
        F[..., 0] += L.Fx_b + Rr.Fx_b - (res_l + res_r)
        F[..., 1] += L.Fy_b + Rr.Fy_b
        tau = np.einsum("...ij,...j->...i", Rt, nw.M_n)
        tau[..., 2] += L.Mz_b + Rr.Mz_b + half * (res_l - res_r)
        vdot = F / vp.mass - _cross(w, v)
        Iw = np.einsum("ij,...j->...i", self.inertia, w)
        wdot = np.einsum("ij,...j->...i", self.inertia_inv, tau - _cross(w, Iw))
        pdot = np.einsum("...ij,...j->...i", R, v)
        edot = euler_rates(euler, w)
        return np.concatenate([pdot, edot, vdot, wdot], axis=-1)

    def stiffness(self, x, wL, wR):
        x = np.asarray(x, dtype=float)
        sigma = self.contacts(x)[1]
        v, w = x[..., 6:9], x[..., 9:12]
        return self.tracks.stiffness(v[..., 0], v[..., 1], w[..., 2], wL, wR, sigma, self.tm)


def slope_rhs(state, w, model: SlopeModel) -> np.ndarray:
    """Time derivative of the 12-value state under ``model``."""
    x = state.as_array() if isinstance(state, State3D) else state
    wL, wR = (w.wL, w.wR) if hasattr(w, "wL") else w
    return model.rhs(x, np.asarray(wL, dtype=float), np.asarray(wR, dtype=float))


def _check3d(x):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e6:
        raise NumericalDivergence("state magnitude exceeded 1e6")
    if np.any(np.abs(np.cos(x[..., 4])) < np.sin(GIMBAL_GUARD)):
        raise GimbalLock("pitch reached the ZYX singularity")


class SlopeSimulator(FlatSimulator):
    angle_slice = slice(3, 6)

    def __init__(self, cfg: SlopeSimConfig, hf: HeightField):
        self.hf = hf
        super().__init__(cfg)

    def make_model(self, cfg):
        return SlopeModel(cfg, self.hf)

    def advance(self, x, wL, wR, n_steps: int | None = None):
        x = super().advance(x, wL, wR, n_steps)
        _check3d(x)
        return x


@dataclass
class SlopeTrajectory:
    t: np.ndarray
    states: np.ndarray
    wheel_cmd: np.ndarray
    normal_force: np.ndarray  # per-track resultant normal force (left, right)

    def to_csv(self, path) -> None:
        cols = ["t", "x", "y", "z", "roll", "pitch", "yaw", "vx_b", "vy_b", "vz_b", "wx_b", "wy_b", "wz_b",
                "wL_cmd", "wR_cmd", "FnL", "FnR"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in zip(self.t, self.states, self.wheel_cmd, self.normal_force):
                w.writerow([repr(float(row[0])), *(repr(float(v)) for a in row[1:] for v in np.ravel(a))])


def track_normal_forces(model: SlopeModel, x) -> np.ndarray:
    """Resultant normal force carried by each track, shape ``(..., 2)``."""
    _, _, load_l, load_r, pc = model.contacts(x)
    if pc is None:
        return np.stack([load_l, load_r], axis=-1)
    return np.stack([load_l.sum(axis=-1), load_r.sum(axis=-1)], axis=-1)


def simulate_slope(initial, wheel_cmd, duration: float, cfg: SlopeSimConfig, hf: HeightField,
                   patch_dump=None) -> SlopeTrajectory:
    """Run the 3D simulator; same command/noise protocol as the flat one.

    ``patch_dump``, if given, is a path receiving rows ``t, i, j, f_n`` of the
    per-patch normal force at every control tick (nonuniform mode).
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    sim = SlopeSimulator(cfg, hf)
    x = initial.as_array() if isinstance(initial, State3D) else np.asarray(initial, dtype=float)
    n_ticks = int(round(duration / cfg.dt_ctrl))
    ts = np.arange(n_ticks + 1) * cfg.dt_ctrl
    states = np.empty((n_ticks + 1,) + x.shape)
    cmds = np.zeros((n_ticks + 1,) + x.shape[:-1] + (2,))
    fn = np.empty((n_ticks + 1,) + x.shape[:-1] + (2,))
    dump = fh = None
    if patch_dump is not None:
        fh = open(patch_dump, "w", newline="")
        dump = csv.writer(fh)
        dump.writerow(["t", "i", "j", "f_n"])
    states[0] = x
    for k in range(n_ticks + 1):
        fn[k] = track_normal_forces(sim.model, x)
        if dump is not None and cfg.load.mode == "nonuniform" and x.ndim == 1:
            pc = sim.model.contacts(x)[-1]
            nl, nw = cfg.vp.patches_longitudinal, cfg.vp.patches_lateral
            for idx, f in enumerate(pc.f_n_world[:, 2]):
                side, rem = divmod(idx, nl * nw)
                i, j = divmod(rem, nw)
                dump.writerow([repr(float(ts[k])), i, j + side * nw, repr(float(f))])
        if k == n_ticks:
            break
        wL, wR = wheel_cmd(ts[k], x)
        wL, wR = sim.noisy(np.asarray(wL, dtype=float), np.asarray(wR, dtype=float))
        cmds[k, ..., 0], cmds[k, ..., 1] = wL, wR
        x = sim.advance(x, wL, wR)
        states[k + 1] = x
    if fh is not None:
        fh.close()
    if n_ticks:
        cmds[-1] = cmds[-2]
    return SlopeTrajectory(ts, states, cmds, fn)
