"""Batched closed-loop episodes: one simulator state per batch element,
each element tracked by its own UC or SLC controller."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..control import Controller, Gains, ReferencePoint, body_tracking_error, world_error
from ..core import WheelSpeeds, rpy_to_rot


@dataclass
class Episode:
    t: np.ndarray
    states: np.ndarray  # (T, B, n)
    wheels: np.ndarray  # applied commands (T, B, 2), last row repeated
    e_xy: np.ndarray  # (T, B)
    e_phi: np.ndarray
    alpha: np.ndarray


def ref_at(refs: ReferencePoint, k: int, idx=slice(None)) -> ReferencePoint:
    return ReferencePoint(*(np.asarray(a)[k, idx] for a in (refs.x_d, refs.y_d, refs.phi_d, refs.v_d, refs.wz_d)))


def stack_references(refs: list[ReferencePoint]) -> ReferencePoint:
    """Per-episode streams ``(T,)`` into one batched stream ``(T, B)``."""
    return ReferencePoint(*(np.stack([getattr(r, f) for r in refs], axis=1)
                            for f in ("x_d", "y_d", "phi_d", "v_d", "wz_d")))


def gravity_body(x) -> np.ndarray:
    """Unit gravity direction in the body frame, ``R^T [0, 0, -1]``."""
    return -rpy_to_rot(x[..., 3:6])[..., 2, :]


def run_closed_loop(sim, x0, refs: ReferencePoint, kinds, slip_models=None, gains: Gains = Gains(),
                    w_max: float | None = 18.0, use_actual_wheels: bool = True) -> Episode:
    """Track ``refs`` (arrays ``(T, B)`` sampled at the control rate) from
    initial states ``x0`` ``(B, n)``.

    Works with the flat simulator (world-frame errors) and the 3D one
    (body-frame errors; 5-input slip models receive the body-frame gravity
    direction).  The "actual" wheel speeds fed to the SLC are the commands
    applied over the previous period, noise included.
    """
    x = np.array(x0, dtype=float)
    three_d = x.shape[-1] == 12
    B = x.shape[0]
    T = np.shape(refs.x_d)[0]
    kinds = np.asarray(kinds)
    vp, dt = sim.cfg.vp, sim.cfg.dt_ctrl
    groups = []
    for kind in ("UC", "SLC"):
        idx = np.flatnonzero(kinds == kind)
        if idx.size:
            groups.append((idx, Controller(kind, vp, gains, slip_models if kind == "SLC" else None, dt, w_max,
                                           use_actual_wheels)))
    use_g = three_d and slip_models is not None and getattr(slip_models, "n_inputs", 2) == 5
    states = np.empty((T, B, x.shape[-1]))
    wheels = np.zeros((T, B, 2))
    e_xy = np.empty((T, B))
    e_phi = np.empty((T, B))
    alpha = np.zeros((T, B))
    prev = None
    for k in range(T):
        states[k] = x
        wL = np.empty(B)
        wR = np.empty(B)
        ref_k = ref_at(refs, k)
        err = body_tracking_error(x, ref_k) if three_d else world_error(x[:, :3], ref_k)
        g = gravity_body(x) if use_g else None
        for idx, ctrl in groups:
            sub = type(err)(*(a[idx] for a in err))
            w_act = None if prev is None else WheelSpeeds(prev[idx, 0], prev[idx, 1])
            out = ctrl(x[idx, :3], ref_at(refs, k, idx), w_act, None if g is None or ctrl.kind == "UC" else g[idx],
                       sub)
            wL[idx], wR[idx] = out.wheels.wL, out.wheels.wR
            alpha[k, idx] = out.diagnostics.alpha_used
        e_xy[k] = np.hypot(err.e_x, err.e_y)
        e_phi[k] = err.e_phi
        if k == T - 1:
            wheels[k] = wheels[k - 1] if k else 0.0
            break
        wL, wR = sim.noisy(wL, wR)
        wheels[k, :, 0], wheels[k, :, 1] = wL, wR
        prev = wheels[k]
        x = sim.advance(x, wL, wR)
    return Episode(np.arange(T) * dt, states, wheels, e_xy, e_phi, alpha)
