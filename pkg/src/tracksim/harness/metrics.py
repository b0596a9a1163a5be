"""Tracking metrics and normalized-time resampling."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np

N_NORMALIZED = 1000


@dataclass(frozen=True)
class Metrics:
    mean_e_xy: float
    max_e_xy: float
    final_e_xy: float
    mean_e_phi: float
    final_e_phi: float
    int_e_xy: float  # time integral, m s
    int_e_phi: float  # time integral of |e_phi|, rad s
    Tf: float
    converged: bool = True

    def __post_init__(self):
        for k, v in asdict(self).items():
            if k != "converged" and not v >= 0:
                raise ValueError(f"metric {k} must be nonnegative, got {v}")

    def to_dict(self) -> dict:
        return asdict(self)


def normalized_trace(t, e, Tf: float, n: int = N_NORMALIZED):
    """Resample ``e(t)`` on ``t / Tf`` over a fixed grid of ``n`` points in [0, 1]."""
    s = np.linspace(0.0, 1.0, n)
    return s, np.interp(s * Tf, t, e)


def compute_metrics(t, e_xy, e_phi, Tf: float | None = None, converged: bool = True) -> Metrics:
    """Metrics over ``[0, Tf]`` (default: the whole record).  Means are
    taken on the normalized-time grid, so runs of different durations are
    weighted alike; integrals are in physical time."""
    t = np.asarray(t, dtype=float)
    e_xy = np.asarray(e_xy, dtype=float)
    e_phi = np.abs(np.asarray(e_phi, dtype=float))
    Tf = float(t[-1]) if Tf is None else float(Tf)
    sel = t <= Tf + 1e-9
    ts, exy, ephi = t[sel], e_xy[sel], e_phi[sel]
    _, nxy = normalized_trace(ts, exy, Tf)
    _, nphi = normalized_trace(ts, ephi, Tf)
    return Metrics(float(nxy.mean()), float(exy.max()), float(exy[-1]), float(nphi.mean()), float(ephi[-1]),
                   float(np.trapezoid(exy, ts)), float(np.trapezoid(ephi, ts)), Tf, bool(converged))


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def write_series(path, t, columns: dict) -> None:
    """CSV with a time column followed by the given per-tick arrays."""
    names = list(columns)
    data = np.column_stack([np.asarray(t, dtype=float)] + [np.asarray(columns[k], dtype=float) for k in names])
    write_rows(path, ["t"] + names, data.tolist())


def read_series(path) -> dict:
    with open(path) as fh:
        header = next(csv.reader(fh))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {k: data[:, i] for i, k in enumerate(header)}


def aggregate(metrics: list[Metrics]) -> dict:
    """Mean and standard deviation of each metric over a set of runs."""
    out = {}
    for k in ("mean_e_xy", "max_e_xy", "final_e_xy", "mean_e_phi", "final_e_phi", "int_e_xy", "int_e_phi", "Tf"):
        v = np.array([getattr(m, k) for m in metrics])
        out[k] = {"mean": float(v.mean()), "std": float(v.std())}
    out["n"] = len(metrics)
    out["non_converged"] = int(sum(not m.converged for m in metrics))
    return out
