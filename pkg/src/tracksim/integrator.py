"""Fixed-step Runge-Kutta integration driven by a Butcher tableau."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ImplicitNonconvergence

IMPLICIT_TOL = 1e-10
IMPLICIT_MAX_ITER = 50


@dataclass(frozen=True)
class ButcherTableau:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    explicit: bool = True
    order: int = 1

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        c = np.asarray(self.c, dtype=float).ravel()
        s = b.size
        if a.shape != (s, s) or c.size != s:
            raise ValueError("tableau dimensions disagree")
        if abs(b.sum() - 1.0) > 1e-12:
            raise ValueError("weights b must sum to 1")
        if self.explicit and np.any(np.triu(a) != 0.0):
            raise ValueError("explicit tableau needs a strictly lower-triangular a")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def stages(self) -> int:
        return self.b.size


EULER = ButcherTableau(a=[[0.0]], b=[1.0], c=[0.0], explicit=True, order=1)
HEUN = ButcherTableau(a=[[0.0, 0.0], [1.0, 0.0]], b=[0.5, 0.5], c=[0.0, 1.0], order=2)
RK3 = ButcherTableau(
    a=[[0, 0, 0], [0.5, 0, 0], [-1.0, 2.0, 0]], b=[1 / 6, 2 / 3, 1 / 6], c=[0, 0.5, 1.0], order=3
)
RK4 = ButcherTableau(
    a=[[0, 0, 0, 0], [0.5, 0, 0, 0], [0, 0.5, 0, 0], [0, 0, 1.0, 0]],
    b=[1 / 6, 1 / 3, 1 / 3, 1 / 6],
    c=[0, 0.5, 0.5, 1.0],
    order=4,
)
BACKWARD_EULER = ButcherTableau(a=[[1.0]], b=[1.0], c=[1.0], explicit=False, order=1)

TABLEAUS = {"euler": EULER, "heun": HEUN, "rk3": RK3, "rk4": RK4, "backward_euler": BACKWARD_EULER}

Rhs = Callable[[np.ndarray, float], np.ndarray]


def _explicit_step(tab: ButcherTableau, rhs: Rhs, x, t, h):
    ks = []
    for i in range(tab.stages):
        xi = x
        for j in range(i):
            if tab.a[i, j] != 0.0:
                xi = xi + (h * tab.a[i, j]) * ks[j]
        ks.append(np.asarray(rhs(xi, t + tab.c[i] * h), dtype=float))
    out = x
    for bi, k in zip(tab.b, ks):
        if bi != 0.0:
            out = out + (h * bi) * k
    return out


def _implicit_step(tab: ButcherTableau, rhs: Rhs, x, t, h):
    k0 = np.asarray(rhs(x, t), dtype=float)
    K = np.stack([k0] * tab.stages)
    for _ in range(IMPLICIT_MAX_ITER):
        K_new = np.stack(
            [
                np.asarray(rhs(x + h * np.tensordot(tab.a[i], K, axes=1), t + tab.c[i] * h), dtype=float)
                for i in range(tab.stages)
            ]
        )
        residual = h * np.max(np.abs(K_new - K))
        K = K_new
        if not np.isfinite(residual):
            break
        if residual < IMPLICIT_TOL:
            return x + h * np.tensordot(tab.b, K, axes=1)
    raise ImplicitNonconvergence(
        f"fixed-point stage iteration did not reach {IMPLICIT_TOL} in {IMPLICIT_MAX_ITER} iterations"
    )


def step(tableau: ButcherTableau, rhs: Rhs, state, t: float, h: float):
    """Advance ``state`` by one step of size ``h``.

    ``rhs(state, t)`` returns the time derivative and may operate on batched
    arrays.  Implicit tableaus solve their stage equations by fixed-point
    iteration.
    """
    if not h > 0:
        raise ValueError("step size must be positive")
    x = np.asarray(state, dtype=float)
    if tableau.explicit:
        return _explicit_step(tableau, rhs, x, t, h)
    return _implicit_step(tableau, rhs, x, t, h)


def integrate(tableau: ButcherTableau, rhs: Rhs, state, t0: float, t1: float, n_steps: int):
    """Integrate over [t0, t1] with ``n_steps`` equal steps; returns the final state."""
    h = (t1 - t0) / n_steps
    x = np.asarray(state, dtype=float)
    t = t0
    for k in range(n_steps):
        x = step(tableau, rhs, x, t, h)
        t = t0 + (k + 1) * h
    return x
