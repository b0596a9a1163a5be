"""Slippage-aware time-optimal planning by single shooting on the
pseudo-kinematic model."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from ..core import VehicleParams, twist_to_wheels, wrap_angle
from ..errors import Nonconvergence
from ..kinematics import tracked_rhs
from .common import PlanRequest, Trajectory, sample_times

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OcpSettings:
    n_knots: int = 40
    n_sub: int = 10
    w_t: float = 1.0
    w_s: float = 1.0
    slack: float = 0.02
    tol: float = 1e-3
    max_iter: int = 500
    fd_step: float = 1e-6
    heading_weight: float = 1.0
    tf_bounds: tuple = (0.2, 120.0)
    rho0: float = 10.0
    rho_max: float = 1e7


@dataclass
class OcpSolution:
    U: np.ndarray
    Tf: float
    converged: bool
    iterations: int
    constraint_violation: float
    cost: float
    terminal_error: float
    warm_cost: float


class ShootingProblem:
    """Decision vector ``z = [wL_0, wR_0, ..., wL_{N-1}, wR_{N-1}, Tf]``;
    every method accepts a batch ``(P, 2N+1)``."""

    def __init__(self, req: PlanRequest, slip_models, settings: OcpSettings = OcpSettings()):
        self.req, self.models, self.s = req, slip_models, settings
        self.vp: VehicleParams = req.vp
        self.x0 = np.array([req.c0.x, req.c0.y, req.c0.phi], dtype=float)
        self.xf = np.array([req.cf.x, req.cf.y, req.cf.phi], dtype=float)

    @property
    def n(self) -> int:
        return 2 * self.s.n_knots + 1

    def split(self, z):
        z = np.atleast_2d(z)
        return z[:, :-1].reshape(len(z), self.s.n_knots, 2), z[:, -1]

    def knot_inputs(self, U):
        """Body twist and lateral slip produced by the wheel knots."""
        wL, wR = U[..., 0], U[..., 1]
        alpha, bL, bR = self.models.predict(wL, wR, smooth=True)
        r, B = self.vp.sprocket_radius, self.vp.track_gauge
        vL, vR = wL * r + bL, wR * r + bR
        return 0.5 * (vL + vR), (vR - vL) / B, alpha

    def rollout(self, z):
        """Knot poses ``(P, N+1, 3)`` plus knot twists and slip angles.

        RK4 with inputs held over a knot: the heading is affine in time, so
        each substep's stages reduce to Simpson's rule on the velocity
        direction, which lets all substeps be evaluated at once.
        """
        z = np.atleast_2d(z)
        U, Tf = self.split(z)
        vx, wz, alpha = self.knot_inputs(U)
        N, M = self.s.n_knots, self.s.n_sub
        P = len(z)
        h = (Tf / (N * M))[:, None]
        phi_k = self.x0[2] + np.concatenate([np.zeros((P, 1)), np.cumsum(wz * h * M, axis=1)], axis=1)
        # substep j starts at heading phi_k + j*wz*h; Simpson weights on the
        # stage headings (start, two midpoints, end) give 1 + 4q + q^2
        q = np.exp(0.5j * wz * h)
        r = np.broadcast_to((q * q)[..., None], (P, N, M - 1))
        S = 1.0 + np.sum(np.cumprod(r, axis=-1), axis=-1) if M > 1 else np.ones((P, N))
        E = np.exp(1j * (phi_k[:, :N] + alpha))
        dz = (vx / np.cos(alpha) * h / 6.0) * (1.0 + 4.0 * q + q * q) * E * S
        xy = np.concatenate([np.zeros((P, 1), dtype=complex), np.cumsum(dz, axis=1)], axis=1)
        x = self.x0[0] + xy.real
        y = self.x0[1] + xy.imag
        return np.stack([x, y, phi_k], axis=-1), vx, wz, alpha

    def terminal_error(self, xN):
        e = xN - self.xf
        e_phi = wrap_angle(e[..., 2]) * self.s.heading_weight
        return np.sqrt(e[..., 0] ** 2 + e[..., 1] ** 2 + e_phi**2)

    def evaluate(self, z):
        """Cost ``(P,)`` and inequality residuals ``(P, 2N+1)`` (``g <= 0``).

        The terminal row is tightened by ``tol`` so that any solution
        accepted at residual ``tol`` still lands within ``slack``."""
        poses, vx, wz, _ = self.rollout(z)
        Tf = np.atleast_2d(z)[:, -1]
        smooth = np.sum(np.diff(vx, axis=1) ** 2 + np.diff(wz, axis=1) ** 2, axis=1)
        f = self.s.w_t * Tf + self.s.w_s * smooth
        g = np.concatenate([self.req.v_min - vx, vx - self.req.v_max,
                            (self.terminal_error(poses[:, -1]) - (self.s.slack - self.s.tol))[:, None]], axis=1)
        return f, g

    def bounds(self):
        w = self.req.w_wheel_max
        return [(-w, w)] * (2 * self.s.n_knots) + [tuple(self.s.tf_bounds)]

    def warm_start(self, traj: Trajectory) -> np.ndarray:
        """Knot wheel speeds from the time-averaged twist of a reference
        trajectory over each knot interval."""
        N = self.s.n_knots
        Tf = traj.duration_Tf
        edges = np.linspace(0.0, Tf, N + 1)
        dt = np.diff(traj.t)
        mid = traj.t[:-1]
        k = np.clip(np.searchsorted(edges, mid, side="right") - 1, 0, N - 1)
        weight = np.bincount(k, dt, N)
        v = np.bincount(k, dt * traj.v_d[:-1], N) / np.maximum(weight, 1e-12)
        w = np.bincount(k, dt * traj.wz_d[:-1], N) / np.maximum(weight, 1e-12)
        wh = twist_to_wheels(v, w, self.vp)
        U = np.clip(np.stack([wh.wL, wh.wR], axis=-1), -self.req.w_wheel_max, self.req.w_wheel_max)
        return np.concatenate([U.ravel(), [Tf]])


def _violation(g):
    return float(np.max(np.maximum(g, 0.0)))


def solve(problem: ShootingProblem, z0: np.ndarray):
    """Augmented-Lagrangian (PHR) outer loop around L-BFGS-B with batched
    central-difference gradients."""
    st = problem.s
    n = problem.n
    lo, hi = np.array(problem.bounds()).T
    z = np.clip(np.asarray(z0, dtype=float), lo, hi)
    f0, g0 = problem.evaluate(z)
    lam = np.zeros(g0.shape[1])
    rho = st.rho0
    eye = np.eye(n)

    def merit(Z, lam, rho):
        f, g = problem.evaluate(Z)
        return f + (np.sum(np.maximum(0.0, lam + rho * g) ** 2, axis=1) - np.sum(lam**2)) / (2.0 * rho)

    iters = 0
    best = (np.inf, np.inf, z)
    prev_viol = _violation(g0[0])
    while iters < st.max_iter:
        def fun(x, lam=lam, rho=rho):
            h = st.fd_step * np.maximum(1.0, np.abs(x))
            xp = np.clip(x + eye * h, lo, hi)
            xm = np.clip(x - eye * h, lo, hi)
            vals = merit(np.vstack([x[None], xp, xm]), lam, rho)
            grad = (vals[1:n + 1] - vals[n + 1:]) / np.maximum(np.diag(xp - xm), 1e-300)
            return vals[0], grad

        res = minimize(fun, z, jac=True, method="L-BFGS-B", bounds=list(zip(lo, hi)),
                       options={"maxiter": min(100, st.max_iter - iters), "ftol": 1e-12, "gtol": 1e-8})
        iters += max(int(res.nit), 1)
        z = res.x
        f, g = problem.evaluate(z)
        viol = _violation(g[0])
        key = (max(viol - st.tol, 0.0), float(f[0]))
        if key < best[:2]:
            best = (*key, z.copy())
        lam = np.maximum(0.0, lam + rho * g[0])
        if viol <= st.tol and res.success:
            break
        if viol > 0.25 * prev_viol:
            rho = min(rho * 10.0, st.rho_max)
        prev_viol = viol
    z = best[2]
    f, g = problem.evaluate(z)
    return z, float(f[0]), g[0], iters, float(problem.evaluate(np.asarray(z0))[0][0])


def plan_ocp(req: PlanRequest, slip_models, warm_start: Trajectory, settings: OcpSettings = OcpSettings(),
             strict: bool = False):
    """Minimum-time wheel-speed knots under the slip model.

    Returns the dense trajectory and an :class:`OcpSolution`.  Without
    ``strict`` a non-converged run returns its best iterate flagged
    ``converged=False``; with it :class:`Nonconvergence` is raised.
    """
    prob = ShootingProblem(req, slip_models, settings)
    z0 = prob.warm_start(warm_start)
    z, cost, g, iters, warm_cost = solve(prob, z0)
    viol = _violation(g)
    U, Tf = prob.split(z)
    poses, _, _, _ = prob.rollout(z)
    term = float(prob.terminal_error(poses[0, -1]))
    converged = viol <= settings.tol and iters < settings.max_iter
    sol = OcpSolution(U[0], float(Tf[0]), converged, iters, viol, cost, term, warm_cost)
    if not converged:
        log.info("OCP stopped after %d iterations with violation %.3g", iters, viol)
        if strict:
            raise Nonconvergence(f"violation {viol:.3g} after {iters} iterations")
    return dense_trajectory(prob, z, req.dt_plan), sol


def dense_trajectory(prob: ShootingProblem, z, dt: float) -> Trajectory:
    """Sample the shooting solution every ``dt``: one RK4 step from the
    enclosing substep node, with the knot's inputs."""
    U, Tf = prob.split(z)
    U, Tf = U[0], float(Tf[0])
    vx, wz, alpha = (a[0] for a in prob.knot_inputs(U[None]))
    N, M = prob.s.n_knots, prob.s.n_sub
    h = Tf / (N * M)
    nodes = [prob.x0.copy()]
    x = prob.x0.copy()
    for k in range(N):
        for _ in range(M):
            x = _rk4(x, vx[k], wz[k], alpha[k], h)
            nodes.append(x)
    nodes = np.array(nodes)
    t = sample_times(Tf, dt)
    sub = np.minimum((t / h).astype(int), N * M - 1)
    tau = t - sub * h
    knot = sub // M
    out = np.array([_rk4(nodes[i], vx[k], wz[k], alpha[k], ta) if ta > 0 else nodes[i]
                    for i, k, ta in zip(sub, knot, tau)])
    return Trajectory(t, out[:, 0], out[:, 1], wrap_angle(out[:, 2]), vx[knot], wz[knot], "SLP")


def _rk4(x, vx, wz, alpha, h):
    f = lambda s: tracked_rhs(s, vx, wz, alpha)  # noqa: E731
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
