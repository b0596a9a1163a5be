"""Planning request/trajectory types, curvature bound and reference resampling."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..control import ReferencePoint
from ..core import Pose2D, VehicleParams, wrap_angle
from ..errors import Infeasible


@dataclass(frozen=True)
class PlanRequest:
    c0: Pose2D
    cf: Pose2D
    v_des: float = 0.4
    v_min: float = 0.4
    v_max: float = 0.4
    w_wheel_max: float = 18.0
    dt_plan: float = 0.01
    vp: VehicleParams = field(default_factory=VehicleParams)

    def __post_init__(self):
        if not self.v_min <= self.v_des <= self.v_max:
            raise ValueError("need v_min <= v_des <= v_max")
        if not self.w_wheel_max > 0:
            raise ValueError("w_wheel_max must be positive")
        if not self.dt_plan > 0:
            raise ValueError("dt_plan must be positive")


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    phi: np.ndarray
    v_d: np.ndarray
    wz_d: np.ndarray
    planner: str = ""

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        if self.t[0] != 0.0 or np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory times must increase strictly from 0")

    @property
    def duration_Tf(self) -> float:
        return float(self.t[-1])

    def poses(self) -> np.ndarray:
        return np.stack([self.x, self.y, self.phi], axis=-1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "phi", "v_d", "wz_d"])
            for row in zip(self.t, self.x, self.y, self.phi, self.v_d, self.wz_d):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(*data.T)


def max_curvature(v_des: float, w_wheel_max: float, vp: VehicleParams) -> float:
    """Largest |k| with both sprocket speeds of ``(v, k v)`` inside the bound."""
    if not v_des > 0:
        raise ValueError("v_des must be positive")
    r, B = vp.sprocket_radius, vp.track_gauge
    if v_des > w_wheel_max * r:
        raise Infeasible(f"v_des {v_des} exceeds the wheel speed bound {w_wheel_max * r}")
    return (2.0 / B) * (w_wheel_max * r - v_des) / v_des


def time_series_reference(traj: Trajectory, dt_ctrl: float, t_end: float | None = None):
    """Resample a trajectory at the control rate.

    Poses are linearly interpolated (heading on the unwrapped branch), the
    velocity references held from the preceding sample.  Beyond ``Tf`` the
    final pose is held with zero velocity.  Returns a :class:`ReferencePoint`
    of arrays and the sample times.
    """
    Tf = traj.duration_Tf
    t_end = Tf if t_end is None else t_end
    ts = sample_times(t_end, dt_ctrl)
    phi_u = np.unwrap(traj.phi)
    x = np.interp(ts, traj.t, traj.x)
    y = np.interp(ts, traj.t, traj.y)
    phi = wrap_angle(np.interp(ts, traj.t, phi_u))
    idx = np.clip(np.searchsorted(traj.t, ts, side="right") - 1, 0, traj.t.size - 1)
    v = np.where(ts <= Tf, traj.v_d[idx], 0.0)
    w = np.where(ts <= Tf, traj.wz_d[idx], 0.0)
    return ts, ReferencePoint(x, y, phi, v, w)


def sample_times(Tf: float, dt: float) -> np.ndarray:
    """``0, dt, 2dt, ...`` with ``Tf`` appended as the exact final time."""
    n = int(np.floor(Tf / dt + 1e-9))
    t = np.arange(n + 1) * dt
    if Tf - t[-1] > 1e-9 * max(1.0, Tf):
        t = np.append(t, Tf)
    else:
        t[-1] = Tf
    return t
