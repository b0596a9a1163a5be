"""Flat-terrain distributed-parameter simulator (3 DOF, body-frame twist)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import integrator
from .core import GRAVITY, State2D, TerramechParams, VehicleParams, wrap_angle
from .errors import NumericalDivergence
from .terramechanics import BothTracks, uniform_pressure

WHEEL_CLAMP = 1e-6
DIVERGENCE_LIMIT = 1e6
# RK4 real-axis stability limit is ~2.785; keep some margin.
RK4_STABLE_HLAMBDA = 2.5
MAX_SUBSTEPS = 16


@dataclass(frozen=True)
class FlatSimConfig:
    vp: VehicleParams = field(default_factory=VehicleParams)
    tm: TerramechParams = field(default_factory=TerramechParams)
    dt_sim: float = 0.001
    dt_ctrl: float = 0.005
    actuator_noise_std: float = 0.0
    rng_seed: int = 0
    tableau: str = "rk4"
    # "auto" splits dt_sim further when the small-slip contact stiffness
    # would make explicit RK4 unstable (low sprocket speeds).
    substeps: int | str = "auto"

    def __post_init__(self):
        if not self.dt_sim > 0:
            raise ValueError("dt_sim must be positive")
        if not self.dt_ctrl >= self.dt_sim:
            raise ValueError("dt_ctrl must be >= dt_sim")
        if self.actuator_noise_std < 0:
            raise ValueError("actuator_noise_std must be >= 0")
        if self.tableau not in integrator.TABLEAUS:
            raise ValueError(f"unknown tableau {self.tableau!r}")
        if self.substeps != "auto" and not (isinstance(self.substeps, int) and self.substeps >= 1):
            raise ValueError("substeps must be 'auto' or a positive int")


def clamp_wheels(w):
    """Keep sprocket speeds at least 1e-6 rad/s away from zero, preserving sign."""
    w = np.asarray(w, dtype=float)
    return np.where(np.abs(w) < WHEEL_CLAMP, np.where(w < 0, -WHEEL_CLAMP, WHEEL_CLAMP), w)


class FlatModel:
    """Right-hand side of the flat model with precomputed footprints."""

    def __init__(self, vp: VehicleParams, tm: TerramechParams, g: float = GRAVITY):
        self.vp, self.tm, self.g = vp, tm, g
        self.tracks = BothTracks(vp)
        self.sigma = uniform_pressure(vp, g)

    def wrenches(self, vx, vy, wz, wL, wR):
        return self.tracks.wrenches(vx, vy, wz, wL, wR, self.sigma, self.tm)

    def rolling_resistance(self, vx, wz):
        """Per-track resistances (signed with track ground speed) and the
        resulting yaw moment about the body origin."""
        vp = self.vp
        half = vp.track_gauge / 2.0
        r0 = 0.5 * vp.mass * self.g * vp.rolling_coeff
        R_L = r0 * np.sign(vx - wz * half)
        R_R = r0 * np.sign(vx + wz * half)
        return R_L + R_R, half * (R_L - R_R)

    def rhs(self, x, wL, wR):
        x = np.asarray(x, dtype=float)
        phi, vx, vy, wz = x[..., 2], x[..., 3], x[..., 4], x[..., 5]
        L, R = self.wrenches(vx, vy, wz, wL, wR)
        R_t, M_r = self.rolling_resistance(vx, wz)
        m, izz = self.vp.mass, self.vp.izz
        dvx = (L.Fx_b + R.Fx_b - R_t) / m + wz * vy
        dvy = (L.Fy_b + R.Fy_b) / m - wz * vx
        dwz = (L.Mz_b + R.Mz_b + M_r) / izz
        c, s = np.cos(phi), np.sin(phi)
        return np.stack([c * vx - s * vy, s * vx + c * vy, wz, dvx, dvy, dwz], axis=-1)

    def stiffness(self, x, wL, wR):
        return self.tracks.stiffness(x[..., 3], x[..., 4], x[..., 5], wL, wR, self.sigma, self.tm)


def flat_rhs(state, w, cfg: FlatSimConfig) -> np.ndarray:
    """Time derivative of ``[x, y, phi, vx_b, vy_b, wz]``.

    ``state`` may be a :class:`State2D` or an array ``(..., 6)``; ``w`` a
    :class:`WheelSpeeds` or a pair of arrays.  Wheel speeds are used as given;
    callers clamp them (see :func:`clamp_wheels`).
    """
    x = state.as_array() if isinstance(state, State2D) else state
    wL, wR = (w.wL, w.wR) if hasattr(w, "wL") else w
    return _model(cfg).rhs(x, np.asarray(wL, dtype=float), np.asarray(wR, dtype=float))


_MODEL_CACHE: dict = {}


def _model(cfg: FlatSimConfig) -> FlatModel:
    key = (cfg.vp, cfg.tm)
    model = _MODEL_CACHE.get(key)
    if model is None:
        model = _MODEL_CACHE[key] = FlatModel(cfg.vp, cfg.tm)
    return model


def _check(x):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT:
        raise NumericalDivergence("state magnitude exceeded 1e6")


class FlatSimulator:
    """Fixed-step integrator with zero-order-hold wheel commands.

    States are arrays ``(6,)`` or batched ``(B, 6)``.  One call to
    :meth:`advance` spans one control period.
    """

    angle_slice = slice(2, 3)

    def __init__(self, cfg):
        self.cfg = cfg
        self.model = self.make_model(cfg)
        self.tableau = integrator.TABLEAUS[cfg.tableau]
        self.n_sim = max(1, int(round(cfg.dt_ctrl / cfg.dt_sim)))
        self.rng = np.random.default_rng(cfg.rng_seed)

    def make_model(self, cfg):
        return _model(cfg)

    def noisy(self, wL, wR):
        std = self.cfg.actuator_noise_std
        if std > 0:
            wL = wL + self.rng.normal(0.0, std, np.shape(wL))
            wR = wR + self.rng.normal(0.0, std, np.shape(wR))
        return wL, wR

    def substeps(self, x, wL, wR):
        """Substeps per ``dt_sim`` keeping ``h*lambda`` inside the RK4
        stability interval; one entry per batch element, rounded up to a
        power of two so batches split into few groups."""
        if self.cfg.substeps != "auto":
            return np.full(np.shape(x)[:-1], self.cfg.substeps, dtype=int)
        lam = np.nan_to_num(self.model.stiffness(x, wL, wR), nan=np.inf)
        n = np.ceil(lam * self.cfg.dt_sim / RK4_STABLE_HLAMBDA)
        n = np.clip(n, 1, MAX_SUBSTEPS)
        return (2 ** np.ceil(np.log2(n))).astype(int)

    def _steps(self, x, wL, wR, n_sub: int, n_steps: int):
        h = self.cfg.dt_sim / n_sub
        rhs = lambda s, t: self.model.rhs(s, wL, wR)  # noqa: E731
        for _ in range(n_sub * n_steps):
            x = integrator.step(self.tableau, rhs, x, 0.0, h)
        return x

    def advance(self, x, wL, wR, n_steps: int | None = None):
        """Integrate ``n_steps`` simulation steps (default: one control period)
        with constant wheel speeds.  Returns the new state."""
        x = np.array(x, dtype=float)
        wL = np.broadcast_to(clamp_wheels(wL), x.shape[:-1])
        wR = np.broadcast_to(clamp_wheels(wR), x.shape[:-1])
        n_total = self.n_sim if n_steps is None else n_steps
        # substep counts are refreshed once per control period
        for s0 in range(0, n_total, self.n_sim):
            n_sub = self.substeps(x, wL, wR)
            k = min(self.n_sim, n_total - s0)
            if x.ndim == 1:
                x = self._steps(x, wL, wR, int(n_sub), k)
                continue
            for n in np.unique(n_sub):
                idx = np.flatnonzero(n_sub == n)
                x[idx] = self._steps(x[idx], wL[idx], wR[idx], int(n), k)
        x[..., self.angle_slice] = wrap_angle(x[..., self.angle_slice])
        _check(x)
        return x


@dataclass
class FlatTrajectory:
    t: np.ndarray
    states: np.ndarray
    wheel_cmd: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "phi", "vx_b", "vy_b", "wz", "wL_cmd", "wR_cmd"])
            for t, s, c in zip(self.t, self.states, self.wheel_cmd):
                w.writerow([repr(float(t)), *(repr(float(v)) for v in s), *(repr(float(v)) for v in c)])


WheelCommand = Callable[[float, np.ndarray], tuple]


def simulate_flat(initial, wheel_cmd: WheelCommand, duration: float, cfg: FlatSimConfig) -> FlatTrajectory:
    """Run the flat simulator for ``duration`` seconds.

    ``wheel_cmd(t, state)`` is sampled once per control period and held; the
    actuator noise, if any, is drawn at the same instants.  The returned
    trajectory holds the state at each control tick and the command applied
    from that tick on (the last row repeats the final command).
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    sim = FlatSimulator(cfg)
    x = initial.as_array() if isinstance(initial, State2D) else np.asarray(initial, dtype=float)
    n_ticks = int(round(duration / cfg.dt_ctrl))
    ts = np.arange(n_ticks + 1) * cfg.dt_ctrl
    states = np.empty((n_ticks + 1,) + x.shape)
    cmds = np.empty((n_ticks + 1,) + x.shape[:-1] + (2,))
    states[0] = x
    for k in range(n_ticks):
        wL, wR = wheel_cmd(ts[k], x)
        wL, wR = sim.noisy(np.asarray(wL, dtype=float), np.asarray(wR, dtype=float))
        cmds[k, ..., 0], cmds[k, ..., 1] = wL, wR
        x = sim.advance(x, wL, wR)
        states[k + 1] = x
    cmds[-1] = cmds[-2] if n_ticks else 0.0
    return FlatTrajectory(ts, states, cmds)
