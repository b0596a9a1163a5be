"""Shortest curvature-bounded paths (Dubins): six candidate words of at most
three straight/arc segments."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..core import Pose2D, wrap_angle
from .common import PlanRequest, Trajectory, max_curvature, sample_times

WORDS = ("LSL", "RSR", "LSR", "RSL", "RLR", "LRL")
TWO_PI = 2.0 * np.pi


def _mod2pi(a):
    return a - TWO_PI * np.floor(a / TWO_PI)


class DubinsPath(NamedTuple):
    word: str
    lengths: tuple  # metres per segment
    rho: float
    start: Pose2D

    @property
    def length(self) -> float:
        return float(sum(self.lengths))


def _normalized(word, d, a, b):
    """Segment lengths in units of the turning radius, or None if the word
    has no solution."""
    sa, sb, ca, cb = np.sin(a), np.sin(b), np.cos(a), np.cos(b)
    c_ab = np.cos(a - b)
    if word == "LSL":
        p_sq = 2 + d * d - 2 * c_ab + 2 * d * (sa - sb)
        if p_sq < 0:
            return None
        tmp = np.arctan2(cb - ca, d + sa - sb)
        return _mod2pi(tmp - a), np.sqrt(p_sq), _mod2pi(b - tmp)
    if word == "RSR":
        p_sq = 2 + d * d - 2 * c_ab + 2 * d * (sb - sa)
        if p_sq < 0:
            return None
        tmp = np.arctan2(ca - cb, d - sa + sb)
        return _mod2pi(a - tmp), np.sqrt(p_sq), _mod2pi(tmp - b)
    if word == "LSR":
        p_sq = -2 + d * d + 2 * c_ab + 2 * d * (sa + sb)
        if p_sq < 0:
            return None
        p = np.sqrt(p_sq)
        tmp = np.arctan2(-ca - cb, d + sa + sb) - np.arctan2(-2.0, p)
        return _mod2pi(tmp - a), p, _mod2pi(tmp - _mod2pi(b))
    if word == "RSL":
        p_sq = -2 + d * d + 2 * c_ab - 2 * d * (sa + sb)
        if p_sq < 0:
            return None
        p = np.sqrt(p_sq)
        tmp = np.arctan2(ca + cb, d - sa - sb) - np.arctan2(2.0, p)
        return _mod2pi(a - tmp), p, _mod2pi(b - tmp)
    if word == "RLR":
        tmp = (6.0 - d * d + 2 * c_ab + 2 * d * (sa - sb)) / 8.0
        if abs(tmp) > 1:
            return None
        phi = np.arctan2(ca - cb, d - sa + sb)
        p = _mod2pi(TWO_PI - np.arccos(tmp))
        t = _mod2pi(a - phi + _mod2pi(p / 2.0))
        return t, p, _mod2pi(a - b - t + _mod2pi(p))
    if word == "LRL":
        tmp = (6.0 - d * d + 2 * c_ab + 2 * d * (sb - sa)) / 8.0
        if abs(tmp) > 1:
            return None
        phi = np.arctan2(ca - cb, d + sa - sb)
        p = _mod2pi(TWO_PI - np.arccos(tmp))
        t = _mod2pi(-a - phi + p / 2.0)
        return t, p, _mod2pi(_mod2pi(b) - a - t + _mod2pi(p))
    raise ValueError(f"unknown word {word}")


def dubins_words(c0: Pose2D, cf: Pose2D, rho: float) -> dict:
    """All feasible words from ``c0`` to ``cf`` with minimum turning radius ``rho``."""
    dx, dy = cf.x - c0.x, cf.y - c0.y
    d = np.hypot(dx, dy) / rho
    th = _mod2pi(np.arctan2(dy, dx)) if d > 0 else 0.0
    a = _mod2pi(c0.phi - th)
    b = _mod2pi(cf.phi - th)
    out = {}
    for word in WORDS:
        seg = _normalized(word, d, a, b)
        if seg is not None:
            out[word] = DubinsPath(word, tuple(float(s) * rho for s in seg), rho, c0)
    return out


def shortest_path(c0: Pose2D, cf: Pose2D, rho: float) -> DubinsPath:
    words = dubins_words(c0, cf, rho)
    return min(words.values(), key=lambda p: p.length)


def advance_segment(x, y, phi, kind, length, rho):
    """Pose after ``length`` metres of a straight (``S``) or arc segment."""
    if kind == "S":
        return x + length * np.cos(phi), y + length * np.sin(phi), phi
    turn = 1.0 if kind == "L" else -1.0
    phi1 = phi + turn * length / rho
    return (x + turn * rho * (np.sin(phi1) - np.sin(phi)),
            y - turn * rho * (np.cos(phi1) - np.cos(phi)), phi1)


def path_poses(path: DubinsPath, s):
    """Poses and signed curvatures at arc lengths ``s`` (clipped to the path)."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, path.length)
    x = np.full(s.shape, float(path.start.x))
    y = np.full(s.shape, float(path.start.y))
    phi = np.full(s.shape, float(path.start.phi))
    kappa = np.zeros(s.shape)
    x0, y0, p0 = path.start.x, path.start.y, path.start.phi
    s0 = 0.0
    for i, (kind, length) in enumerate(zip(path.word, path.lengths)):
        last = i == 2
        sel = (s >= s0) & ((s < s0 + length) | last)
        xs, ys, ps = advance_segment(x0, y0, p0, kind, s[sel] - s0, path.rho)
        x[sel], y[sel], phi[sel] = xs, ys, ps
        kappa[sel] = {"L": 1.0, "S": 0.0, "R": -1.0}[kind] / path.rho
        x0, y0, p0 = advance_segment(x0, y0, p0, kind, length, path.rho)
        s0 += length
    return x, y, wrap_angle(phi), kappa


def plan_dubins(req: PlanRequest) -> Trajectory:
    """Shortest Dubins path at the turning radius allowed by the wheel bound,
    followed at constant ``v_des``."""
    k = max_curvature(req.v_des, req.w_wheel_max, req.vp)
    path = shortest_path(req.c0, req.cf, 1.0 / k)
    Tf = path.length / req.v_des
    if Tf <= 0:
        raise ValueError("start and target coincide")
    t = sample_times(Tf, req.dt_plan)
    x, y, phi, kappa = path_poses(path, req.v_des * t)
    traj = Trajectory(t, x, y, phi, np.full(t.shape, req.v_des), kappa * req.v_des, "DP")
    traj.path = path
    return traj
