"""Reference streams (chicane, spiral) and Halton target sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from ..control import ReferencePoint
from ..core import Pose2D, wrap_angle

HALTON_BASES = (2, 3, 5)


@dataclass(frozen=True)
class ChicaneSpec:
    v_max: float = 0.2
    w_max: float = 0.3
    t1: float = 2.0
    t2: float = 12.0
    t_end: float = 20.0

    def __post_init__(self):
        if not 0 < self.t1 < self.t2 < self.t_end:
            raise ValueError("need 0 < t1 < t2 < t_end")

    def twist(self, t):
        """Desired ``(v, wz)``; the ramp is linear from rest and ``wz``
        switches at ``t1`` and ``t2`` (right-continuous)."""
        t = np.asarray(t, dtype=float)
        v = np.where(t < self.t1, self.v_max * t / self.t1, self.v_max)
        w = np.where(t < self.t1, 0.0, np.where(t < self.t2, self.w_max, -self.w_max))
        return v, w

    def segments(self):
        """Constant-twist pieces ``(t0, t1, twist)`` for exact integration."""
        return [(0.0, self.t1), (self.t1, self.t2), (self.t2, self.t_end)]


def _arc(x, y, phi, v, w, dt):
    """Exact unicycle motion with constant ``(v, w)`` over ``dt``."""
    th = w * dt
    with np.errstate(invalid="ignore", divide="ignore"):
        sinc = np.where(np.abs(th) > 1e-9, np.sin(th / 2) / np.where(th == 0, 1.0, th / 2), 1.0)
    d = v * dt * sinc
    mid = phi + th / 2
    return x + d * np.cos(mid), y + d * np.sin(mid), phi + th


def chicane_poses(spec: ChicaneSpec, t, origin: Pose2D = Pose2D()):
    """Desired poses of the chicane in closed form: a straight ramp
    (``x = v_max t^2 / (2 t1)``) followed by two circular arcs."""
    t = np.asarray(t, dtype=float)
    c, s = np.cos(origin.phi), np.sin(origin.phi)
    tr = np.minimum(t, spec.t1)
    d = 0.5 * spec.v_max * tr**2 / spec.t1
    x, y, phi = d, np.zeros_like(t), np.zeros_like(t)
    x1, y1, p1 = 0.5 * spec.v_max * spec.t1, 0.0, 0.0
    on1 = (t > spec.t1) & (t <= spec.t2)
    xa, ya, pa = _arc(x1, y1, p1, spec.v_max, spec.w_max, np.clip(t - spec.t1, 0, spec.t2 - spec.t1))
    x2, y2, p2 = _arc(x1, y1, p1, spec.v_max, spec.w_max, spec.t2 - spec.t1)
    on2 = t > spec.t2
    xb, yb, pb = _arc(x2, y2, p2, spec.v_max, -spec.w_max, np.maximum(t - spec.t2, 0.0))
    x = np.where(on1, xa, np.where(on2, xb, x))
    y = np.where(on1, ya, np.where(on2, yb, y))
    phi = np.where(on1, pa, np.where(on2, pb, phi))
    return origin.x + c * x - s * y, origin.y + s * x + c * y, wrap_angle(origin.phi + phi)


def chicane_reference(v_max: float = 0.2, w_max: float = 0.3, t1: float = 2.0, t2: float = 12.0,
                      t_end: float = 20.0, dt: float = 0.005, origin: Pose2D = Pose2D()):
    """Sampled chicane reference: times and a :class:`ReferencePoint` of arrays."""
    spec = ChicaneSpec(v_max, w_max, t1, t2, t_end)
    ts = np.arange(int(round(t_end / dt)) + 1) * dt
    x, y, phi = chicane_poses(spec, ts, origin)
    v, w = spec.twist(ts)
    return ts, ReferencePoint(x, y, phi, v, w)


@dataclass(frozen=True)
class SpiralSpec:
    """Constant speed with linearly growing yaw rate (a clothoid spiral)."""

    v: float = 0.3
    w_rate: float = 4.0

    def twist(self, t):
        t = np.asarray(t, dtype=float)
        return np.full(t.shape, self.v), self.w_rate * t


def halton(n: int, d: int = 3) -> np.ndarray:
    """First ``n`` points of the unscrambled Halton sequence in bases 2, 3, 5, ..."""
    return qmc.Halton(d=d, scramble=False).random(n)


def halton_targets(n: int, r_min: float = 2.0, r_max: float = 4.0, extent: float = 8.0) -> list[Pose2D]:
    """``n`` target poses from the Halton sequence: the first two coordinates
    scaled to a square of side ``extent`` centred on the origin and kept if
    inside the annulus ``[r_min, r_max]``, the third mapped to a heading in
    ``[0, 2 pi)``."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 < r_min < r_max <= extent / 2:
        raise ValueError("need 0 < r_min < r_max <= extent / 2")
    out: list[Pose2D] = []
    engine = qmc.Halton(d=3, scramble=False)
    while len(out) < n:
        pts = engine.random(max(4 * n, 64))
        xy = (pts[:, :2] - 0.5) * extent
        r = np.hypot(xy[:, 0], xy[:, 1])
        for (x, y), h, ri in zip(xy, pts[:, 2], r):
            if r_min <= ri <= r_max and len(out) < n:
                out.append(Pose2D(float(x), float(y), float(2.0 * np.pi * h)))
    return out


def target_discrepancy(targets, r_max: float = 4.0) -> float:
    """Centred L2 discrepancy of targets mapped back to the unit cube."""
    pts = np.array([[t.x, t.y, t.phi] for t in targets])
    u = np.column_stack([(pts[:, :2] + r_max) / (2 * r_max), np.mod(pts[:, 2], 2 * np.pi) / (2 * np.pi)])
    return float(qmc.discrepancy(np.clip(u, 0.0, 1.0)))
