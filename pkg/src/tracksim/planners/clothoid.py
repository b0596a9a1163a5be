"""G1 Hermite interpolation with a single clothoid segment, sampled at
constant speed."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.special import fresnel

from ..core import wrap_angle
from ..errors import FitNonconvergence
from .common import PlanRequest, Trajectory, sample_times

SMALL_A = 1e-2
MAX_NEWTON = 100
_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)
_GL_T = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def fresnel_cs(z):
    """Standard Fresnel integrals ``C(z), S(z)`` with the ``pi/2`` kernel."""
    s, c = fresnel(z)
    return c, s


def _moments_quadrature(a, b, c, k_max):
    """Composite Gauss-Legendre, one 48-point panel per ~15 rad of phase."""
    swing = float(np.max(0.5 * np.abs(a) + np.abs(b), initial=0.0))
    n = 1 + int(swing // 15.0)
    t = ((np.arange(n)[:, None] + _GL_T[None, :]) / n).ravel()
    w = np.tile(_GL_W / n, n)
    ph = 0.5 * a[..., None] * t**2 + b[..., None] * t + c[..., None]
    e = np.exp(1j * ph)
    return [np.sum(w * t**k * e, axis=-1) for k in range(k_max + 1)]


def _moment0_fresnel(a, b, c):
    """Integral of ``exp(i (a t^2/2 + b t + c))`` over [0, 1] for |a| not small."""
    s = np.sign(a)
    aa = np.abs(a)
    scale = np.sqrt(aa / np.pi)
    u0 = scale * (b / a)
    u1 = scale * (1.0 + b / a)
    C1, S1 = fresnel_cs(u1)
    C0, S0 = fresnel_cs(u0)
    F = (C1 - C0) + 1j * s * (S1 - S0)
    return np.sqrt(np.pi / aa) * np.exp(1j * (c - b * b / (2.0 * a))) * F


def generalized_fresnel(a, b, c, k_max: int = 2):
    """Moments ``X_k + i Y_k = int_0^1 t^k exp(i (a t^2/2 + b t + c)) dt``.

    The zeroth moment uses the Fresnel closed form (quadrature for small
    ``|a|``, where the completed square degenerates).  Higher moments use
    quadrature: the recursion by parts divides by ``a`` and loses digits.
    """
    a, b, c = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, c)))
    shape = a.shape
    a, b, c = (np.atleast_1d(v).ravel() for v in (a, b, c))
    small = np.abs(a) < SMALL_A
    out = _moments_quadrature(a, b, c, k_max)
    if np.any(~small):
        out[0][~small] = _moment0_fresnel(a[~small], b[~small], c[~small])
    return [(o.real.reshape(shape), o.imag.reshape(shape)) for o in out]


class Clothoid(NamedTuple):
    x0: float
    y0: float
    theta0: float
    kappa0: float
    dkappa: float
    length: float

    def curvature(self, s):
        return self.kappa0 + self.dkappa * np.asarray(s, dtype=float)

    def heading(self, s):
        s = np.asarray(s, dtype=float)
        return self.theta0 + self.kappa0 * s + 0.5 * self.dkappa * s * s

    def point(self, s):
        s = np.asarray(s, dtype=float)
        (X, Y), = generalized_fresnel(self.dkappa * s * s, self.kappa0 * s, self.theta0, 0)
        return self.x0 + s * X, self.y0 + s * Y


def fit_g1(x0, y0, th0, x1, y1, th1, tol: float = 1e-12) -> Clothoid:
    """Clothoid from ``(x0, y0, th0)`` to ``(x1, y1, th1)`` by Newton on the
    scalar G1 equation in the normalized parameter ``A``."""
    dx, dy = x1 - x0, y1 - y0
    r = np.hypot(dx, dy)
    if r == 0:
        raise FitNonconvergence("coincident endpoints")
    phi = np.arctan2(dy, dx)
    p0 = float(wrap_angle(th0 - phi))
    p1 = float(wrap_angle(th1 - phi))
    delta = p1 - p0
    A = 3.0 * (p0 + p1)  # initial guess of the normalized problem
    for _ in range(MAX_NEWTON):
        (_, Y0), (X1, _), (X2, _) = ((float(u), float(v)) for u, v in generalized_fresnel(2 * A, delta - A, p0, 2))
        g = Y0
        dg = X2 - X1
        if abs(g) < tol:
            break
        A -= g / dg
    else:
        raise FitNonconvergence("G1 Newton iteration did not converge")
    (X0, _), = generalized_fresnel(2 * A, delta - A, p0, 0)
    L = r / float(X0)
    if not L > 0:
        raise FitNonconvergence("negative clothoid length")
    return Clothoid(float(x0), float(y0), float(th0), (delta - A) / L, 2 * A / L**2, L)


def plan_clothoid(req: PlanRequest) -> Trajectory:
    """Single G1 clothoid from start to target, followed at ``v_des``.

    Samples are spaced ``v_des * dt_plan`` in arc length; pose and curvature
    are evaluated in closed form along the curve.
    """
    if not req.v_des > 0:
        raise ValueError("v_des must be positive")
    cl = fit_g1(req.c0.x, req.c0.y, req.c0.phi, req.cf.x, req.cf.y, req.cf.phi)
    Tf = cl.length / req.v_des
    t = sample_times(Tf, req.dt_plan)
    s = np.minimum(req.v_des * t, cl.length)
    x, y = cl.point(s)
    traj = Trajectory(t, x, y, wrap_angle(cl.heading(s)), np.full(t.shape, req.v_des),
                      cl.curvature(s) * req.v_des, "CP")
    traj.clothoid = cl
    return traj
