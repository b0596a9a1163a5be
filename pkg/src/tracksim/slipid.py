"""Slippage identification: simulated wheel-speed sweeps, grid regressors
for (alpha, beta_L, beta_R) and the exponential turning-radius model."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.interpolate import RBFInterpolator
from scipy.optimize import least_squares
from scipy.spatial import cKDTree

from .core import SlipParams, VehicleParams, WheelSpeeds, rpy_to_rot, wrap_angle
from .errors import DegenerateFit, InsufficientData, ModelArityMismatch
from .kinematics import V_EPS, slip_arrays

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CHANNELS = ("alpha", "beta_L", "beta_R")
DENSE_STEP = 0.1
SMOOTHING = 0.1


@dataclass(frozen=True)
class SweepSpec:
    w_max: float = 10.0
    step: float = 0.65
    hold: float = 2.0
    window: float = 0.25

    def axis(self) -> np.ndarray:
        n = int(np.floor(2 * self.w_max / self.step + 1e-9)) + 1
        return -self.w_max + self.step * np.arange(n)

    def pairs(self):
        a = self.axis()
        WL, WR = np.meshgrid(a, a, indexing="ij")
        return WL.ravel(), WR.ravel()


@dataclass
class SlipDataset:
    """Steady-state averaged records, one row per (wheel pair, slope)."""

    wL: np.ndarray
    wR: np.ndarray
    alpha: np.ndarray
    beta_L: np.ndarray
    beta_R: np.ndarray
    vx_sign: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    wz: np.ndarray
    g_hat_body: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.wL.size

    @property
    def n_inputs(self) -> int:
        return 2 if self.g_hat_body is None else 5

    def inputs(self) -> np.ndarray:
        X = np.stack([self.wL, self.wR], axis=-1)
        if self.g_hat_body is not None:
            X = np.concatenate([X, self.g_hat_body], axis=-1)
        return X

    def subset(self, mask) -> "SlipDataset":
        mask = np.asarray(mask)
        g = None if self.g_hat_body is None else self.g_hat_body[mask]
        fields_ = {k: getattr(self, k)[mask] for k in ("wL", "wR", "alpha", "beta_L", "beta_R", "vx_sign", "vx", "vy", "wz")}
        return SlipDataset(**fields_, g_hat_body=g, meta=dict(self.meta))

    def to_json(self) -> dict:
        d = {k: getattr(self, k).tolist() for k in ("wL", "wR", "alpha", "beta_L", "beta_R", "vx_sign", "vx", "vy", "wz")}
        d["g_hat_body"] = None if self.g_hat_body is None else self.g_hat_body.tolist()
        return {"schema": SCHEMA_VERSION, "kind": "dataset", "meta": self.meta, **d}

    @classmethod
    def from_json(cls, d: dict) -> "SlipDataset":
        _check_schema(d, "dataset")
        arrays = {k: np.asarray(d[k], dtype=float) for k in ("wL", "wR", "alpha", "beta_L", "beta_R", "vx_sign", "vx", "vy", "wz")}
        g = None if d.get("g_hat_body") is None else np.asarray(d["g_hat_body"], dtype=float)
        return cls(**arrays, g_hat_body=g, meta=d.get("meta", {}))


def _check_schema(d, kind):
    if d.get("schema") != SCHEMA_VERSION or d.get("kind") != kind:
        raise ValueError(f"expected {kind} schema v{SCHEMA_VERSION}")


def branch_alpha(alpha_raw, vx):
    """Fold the raw ``atan2(vy, vx)`` onto ``(-pi/2, pi/2)``: for backward
    motion the lateral slip is measured from the -x axis."""
    return np.where(np.asarray(vx) < 0, wrap_angle(np.asarray(alpha_raw) + np.pi), alpha_raw)


def _average_window(t, vx, vy, wz, wL, wR, vp, hold, window):
    """Average per-tick slip estimates over the final ``window`` fraction of
    the hold.  Arrays are ``(T, B)``."""
    sel = t >= hold * (1.0 - window) - 1e-12
    vx, vy, wz = vx[sel], vy[sel], wz[sel]
    alpha_raw, bL, bR = slip_arrays(vx, vy, wz, wL, wR, vp)
    undefined = np.any(np.abs(vx) <= V_EPS, axis=0)
    alpha = branch_alpha(alpha_raw, vx)
    with np.errstate(invalid="ignore"):
        return (np.nanmean(np.where(undefined, 0.0, alpha), axis=0), bL.mean(0), bR.mean(0),
                vx.mean(0), vy.mean(0), wz.mean(0), undefined, sel)


def collect_flat_dataset(cfg, sweep: SweepSpec = SweepSpec(), chunk: int = 1024, pairs=None) -> SlipDataset:
    """Open-loop sweep of the flat simulator over the wheel-speed grid (or
    over explicit ``pairs = (wL, wR)``, e.g. for held-out validation)."""
    from .dynamics2d import FlatSimulator

    wL_all, wR_all = sweep.pairs() if pairs is None else (np.asarray(p, dtype=float) for p in pairs)
    sim = FlatSimulator(cfg)
    n_ticks = int(round(sweep.hold / cfg.dt_ctrl))
    t = np.arange(1, n_ticks + 1) * cfg.dt_ctrl
    out = []
    for s in range(0, wL_all.size, chunk):
        wL, wR = wL_all[s:s + chunk], wR_all[s:s + chunk]
        x = np.zeros((wL.size, 6))
        hist = np.empty((n_ticks, wL.size, 3))
        for k in range(n_ticks):
            x = sim.advance(x, wL, wR)
            hist[k] = x[:, 3:6]
        out.append(_average_window(t, hist[..., 0], hist[..., 1], hist[..., 2], wL, wR, cfg.vp, sweep.hold, sweep.window))
    return _records(wL_all, wR_all, out, None, {"simulator": "flat", "mu": cfg.tm.friction_mu})


def _records(wL, wR, out, g_hat, meta):
    cat = [np.concatenate([o[i] for o in out]) for i in range(7)]
    alpha, bL, bR, vx, vy, wz, undefined = cat
    keep = ~undefined
    skipped = int(undefined.sum())
    if skipped:
        log.info("skipped %d sweep records with undefined lateral slip", skipped)
    meta = dict(meta, skipped=skipped, candidates=int(wL.size))
    g = None if g_hat is None else g_hat[keep]
    return SlipDataset(wL[keep], wR[keep], alpha[keep], bL[keep], bR[keep], np.sign(vx[keep]), vx[keep],
                       vy[keep], wz[keep], g, meta)


def collect_slope_dataset(cfg, slopes, sweep: SweepSpec = SweepSpec(), yaw0: float = 0.0, extent: float = 12.0,
                          chunk: int = 1024, pairs=None) -> SlipDataset:
    """Open-loop sweeps on planar ramps of each inclination, recording the
    averaged body-frame gravity direction as extra regressor inputs."""
    from .dynamics3d import SlopeSimulator
    from .terrain import initial_pose_on_terrain, make_ramp

    wL_g, wR_g = sweep.pairs() if pairs is None else (np.asarray(p, dtype=float) for p in pairs)
    parts = []
    for slope in slopes:
        hf = make_ramp(slope, extent, 0.1)
        x0 = initial_pose_on_terrain(hf, 0.0, 0.0, yaw0, cfg.vp).as_array()
        sim = SlopeSimulator(cfg, hf)
        n_ticks = int(round(sweep.hold / cfg.dt_ctrl))
        t = np.arange(1, n_ticks + 1) * cfg.dt_ctrl
        out, gs = [], []
        for s in range(0, wL_g.size, chunk):
            wL, wR = wL_g[s:s + chunk], wR_g[s:s + chunk]
            x = np.repeat(x0[None], wL.size, axis=0)
            hist = np.empty((n_ticks, wL.size, 3))
            ghist = np.empty((n_ticks, wL.size, 3))
            for k in range(n_ticks):
                x = sim.advance(x, wL, wR)
                hist[k] = np.stack([x[:, 6], x[:, 7], x[:, 11]], axis=-1)
                ghist[k] = -rpy_to_rot(x[:, 3:6])[:, 2, :]
            res = _average_window(t, hist[..., 0], hist[..., 1], hist[..., 2], wL, wR, cfg.vp, sweep.hold, sweep.window)
            g = ghist[res[-1]].mean(axis=0)
            gs.append(g / np.linalg.norm(g, axis=-1, keepdims=True))
            out.append(res)
        parts.append(_records(wL_g, wR_g, out, np.concatenate(gs), {"slope": float(slope)}))
    ds = concat_datasets(parts)
    ds.meta = {"simulator": "slope_" + cfg.load.mode, "mu": cfg.tm.friction_mu, "slopes": [float(s) for s in slopes],
               "skipped": sum(p.meta["skipped"] for p in parts)}
    return ds


def concat_datasets(parts) -> SlipDataset:
    keys = ("wL", "wR", "alpha", "beta_L", "beta_R", "vx_sign", "vx", "vy", "wz")
    arrays = {k: np.concatenate([getattr(p, k) for p in parts]) for k in keys}
    g = None if parts[0].g_hat_body is None else np.concatenate([p.g_hat_body for p in parts])
    return SlipDataset(**arrays, g_hat_body=g, meta={})


def slope_inclinations(n: int = 7, lo: float = -0.3, hi: float = 0.0) -> np.ndarray:
    return np.linspace(lo, hi, n)


class Prediction(NamedTuple):
    value: np.ndarray
    extrapolated: np.ndarray


class GridRegressor:
    """Smoothed thin-plate RBF fit sampled on a dense 0.1 rad/s grid and read
    back piecewise-constantly (nearest cell), clamped to the grid."""

    n_inputs = 2

    def __init__(self, axes, values, bounds, channel="", branch=0):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.values = np.asarray(values, dtype=float)
        self.bounds = tuple(float(b) for b in bounds)
        self.channel, self.branch = channel, int(branch)

    @classmethod
    def fit(cls, X, y, channel="", branch=0, step: float = DENSE_STEP, smoothing: float = SMOOTHING):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        lo, hi = X.min(axis=0), X.max(axis=0)
        axes = [lo[d] + step * np.arange(int(np.floor((hi[d] - lo[d]) / step + 1e-9)) + 1) for d in range(2)]
        G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
        if np.ptp(y) == 0:
            dense = np.full(len(G), y[0])
        else:
            rbf = RBFInterpolator(X, y, kernel="thin_plate_spline", smoothing=smoothing)
            dense = np.concatenate([rbf(G[i:i + 20000]) for i in range(0, len(G), 20000)])
        bounds = (y.min(), y.max())
        dense = np.clip(dense, *bounds).reshape(len(axes[0]), len(axes[1]))
        return cls(axes, dense, bounds, channel, branch)

    def _index(self, q, axis):
        if axis.size == 1:
            return np.zeros(np.shape(q), int)
        idx = np.rint((q - axis[0]) / DENSE_STEP).astype(int)
        return np.minimum(np.maximum(idx, 0), axis.size - 1)

    def predict(self, X) -> Prediction:
        X = np.asarray(X, dtype=float)
        ax0, ax1 = self.axes
        q0, q1 = X[..., 0], X[..., 1]
        i, j = self._index(q0, ax0), self._index(q1, ax1)
        tol = 1e-9
        extra = (q0 < ax0[0] - tol) | (q0 > ax0[-1] + tol) | (q1 < ax1[0] - tol) | (q1 > ax1[-1] + tol)
        return Prediction(self.values[i, j], extra)

    def smooth(self, X) -> np.ndarray:
        """C1 cubic-convolution interpolant of the dense table (inputs
        clamped to the grid) for gradient-based optimisation."""
        X = np.asarray(X, dtype=float)
        parts = []
        for d, axis in enumerate(self.axes):
            n = axis.size
            u = (np.clip(X[..., d], axis[0], axis[-1]) - axis[0]) / DENSE_STEP
            i = np.clip(np.floor(u).astype(int), 0, max(n - 2, 0))
            t = u - i
            t2, t3 = t * t, t * t * t
            w = np.stack([(-t3 + 2 * t2 - t) / 2, (3 * t3 - 5 * t2 + 2) / 2, (-3 * t3 + 4 * t2 + t) / 2,
                          (t3 - t2) / 2], axis=-1)
            idx = np.clip(i[..., None] + np.arange(-1, 3), 0, n - 1)
            parts.append((idx, w))
        (i0, w0), (i1, w1) = parts
        flat = i0[..., :, None] * self.values.shape[1] + i1[..., None, :]
        V = np.take(self.values, flat)
        return np.sum(np.sum(V * w1[..., None, :], axis=-1) * w0, axis=-1)

    def to_json(self) -> dict:
        return {"kind": "grid", "axes": [a.tolist() for a in self.axes], "values": self.values.tolist(),
                "bounds": list(self.bounds), "channel": self.channel, "branch": self.branch}

    @classmethod
    def from_json(cls, d):
        return cls(d["axes"], d["values"], d["bounds"], d.get("channel", ""), d.get("branch", 0))


class NearestRegressor:
    """Scattered-input variant (wheel speeds plus body gravity direction):
    RBF-smoothed training values, read back by nearest neighbour in a
    per-dimension scaled input space."""

    def __init__(self, points, values, scale, bounds, channel="", branch=0):
        self.points = np.asarray(points, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        self.bounds = tuple(float(b) for b in bounds)
        self.lo, self.hi = self.points.min(axis=0), self.points.max(axis=0)
        self.channel, self.branch = channel, int(branch)
        self.n_inputs = self.points.shape[1]
        self._tree = cKDTree(self.points / self.scale)

    @classmethod
    def fit(cls, X, y, channel="", branch=0, smoothing: float = SMOOTHING, neighbors: int = 64, scale=None):
        """``scale`` is the per-input length unit of the distance metric
        (default: the input standard deviations)."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        scale = np.maximum(X.std(axis=0), 1e-3) if scale is None else np.asarray(scale, dtype=float)
        sm = y.copy()
        if np.ptp(y) > 0:
            # a neighbourhood can be rank deficient for the linear tail; widen it
            for k in (neighbors, 2 * neighbors, 4 * neighbors):
                try:
                    rbf = RBFInterpolator(X / scale, y, kernel="thin_plate_spline", smoothing=smoothing,
                                          neighbors=min(k, len(y)))
                    sm = rbf(X / scale)
                    break
                except np.linalg.LinAlgError:
                    log.info("RBF smoothing of %s singular with %d neighbours", channel, k)
        sm = np.clip(sm, y.min(), y.max())
        return cls(X, sm, scale, (y.min(), y.max()), channel, branch)

    def predict(self, X) -> Prediction:
        X = np.asarray(X, dtype=float)
        _, idx = self._tree.query(X / self.scale)
        extra = np.any((X < self.lo - 1e-9) | (X > self.hi + 1e-9), axis=-1)
        return Prediction(self.values[idx], extra)

    def smooth(self, X) -> np.ndarray:
        # inverse-distance blend of the 8 nearest smoothed samples
        X = np.asarray(X, dtype=float)
        d, idx = self._tree.query(X / self.scale, k=min(8, len(self.values)))
        wts = 1.0 / np.maximum(d, 1e-9) ** 2
        return np.sum(wts * self.values[idx], axis=-1) / np.sum(wts, axis=-1)

    def to_json(self) -> dict:
        return {"kind": "nearest", "points": self.points.tolist(), "values": self.values.tolist(),
                "scale": self.scale.tolist(), "bounds": list(self.bounds), "channel": self.channel,
                "branch": self.branch}

    @classmethod
    def from_json(cls, d):
        return cls(d["points"], d["values"], d["scale"], d["bounds"], d.get("channel", ""), d.get("branch", 0))


def fit_grid_regressor(ds: SlipDataset, channel: str, branch: int = 0):
    """Fit one channel.  ``branch`` selects records with that sign of the
    forward speed (0 uses all records)."""
    if channel not in CHANNELS:
        raise ValueError(f"channel must be one of {CHANNELS}")
    sub = ds if branch == 0 else ds.subset(ds.vx_sign == np.sign(branch))
    if len(sub) < 4:
        raise InsufficientData(f"{len(sub)} records for channel {channel} branch {branch}")
    y = getattr(sub, channel)
    if ds.n_inputs == 2:
        return GridRegressor.fit(sub.inputs(), y, channel, branch)
    return NearestRegressor.fit(sub.inputs(), y, channel, branch, scale=slope_input_scale(ds))


def slope_input_scale(ds: SlipDataset) -> np.ndarray | None:
    """Metric units for the 5 slope inputs: one wheel-sweep step for the
    wheel speeds and one inclination step for the gravity components, so a
    grid neighbour in either direction is equally far.  None (standard
    deviations) when the sweep spacing cannot be recovered."""
    w = np.unique(np.round(np.concatenate([ds.wL, ds.wR]), 9))
    slopes = np.unique(ds.meta.get("slopes", []))
    if w.size < 2 or slopes.size < 2:
        return None
    dw = float(np.min(np.diff(w)))
    dg = float(np.min(np.diff(np.sin(slopes))))
    return np.array([dw, dw, dg, dg, dg])


def _regressor_from_json(d):
    return GridRegressor.from_json(d) if d["kind"] == "grid" else NearestRegressor.from_json(d)


def default_vx_sign(wL, wR):
    return np.where(np.asarray(wL) + np.asarray(wR) < 0, -1.0, 1.0)


@dataclass
class SlipModels:
    """Regressor set ``{f_alpha+, f_alpha-, f_betaL, f_betaR}``."""

    alpha_pos: object
    alpha_neg: object
    beta_L: object
    beta_R: object

    @property
    def n_inputs(self) -> int:
        return self.beta_L.n_inputs

    def _inputs(self, wL, wR, g_hat):
        wL, wR = np.broadcast_arrays(np.asarray(wL, dtype=float), np.asarray(wR, dtype=float))
        if self.n_inputs == 2:
            if g_hat is not None:
                raise ModelArityMismatch("flat slip models take no gravity input")
            return np.stack([wL, wR], axis=-1)
        if g_hat is None:
            raise ModelArityMismatch("slope slip models need the body-frame gravity direction")
        g = np.broadcast_to(np.asarray(g_hat, dtype=float), wL.shape + (3,))
        return np.concatenate([np.stack([wL, wR], axis=-1), g], axis=-1)

    def predict(self, wL, wR, vx_sign=None, g_hat=None, smooth: bool = False):
        X = self._inputs(wL, wR, g_hat)
        sign = default_vx_sign(wL, wR) if vx_sign is None else np.asarray(vx_sign)
        ev = (lambda m: m.smooth(X)) if smooth else (lambda m: m.predict(X).value)
        alpha = np.where(sign < 0, ev(self.alpha_neg), ev(self.alpha_pos))
        return alpha, ev(self.beta_L), ev(self.beta_R)

    def to_json(self) -> dict:
        return {"schema": SCHEMA_VERSION, "kind": "slip_models",
                **{k: getattr(self, k).to_json() for k in ("alpha_pos", "alpha_neg", "beta_L", "beta_R")}}

    @classmethod
    def from_json(cls, d):
        _check_schema(d, "slip_models")
        return cls(*(_regressor_from_json(d[k]) for k in ("alpha_pos", "alpha_neg", "beta_L", "beta_R")))


def fit_slip_models(ds: SlipDataset) -> SlipModels:
    return SlipModels(fit_grid_regressor(ds, "alpha", +1), fit_grid_regressor(ds, "alpha", -1),
                      fit_grid_regressor(ds, "beta_L"), fit_grid_regressor(ds, "beta_R"))


class ZeroSlip:
    """Slip model set that always predicts zero slippage."""

    n_inputs = 2

    def predict(self, wL, wR, vx_sign=None, g_hat=None, smooth: bool = False):
        z = np.zeros(np.broadcast(np.asarray(wL), np.asarray(wR)).shape)
        return z, z, z


def predict_slip(models, w: WheelSpeeds, vx_sign=None, g_hat=None) -> SlipParams:
    alpha, bL, bR = models.predict(w.wL, w.wR, vx_sign, g_hat)
    return SlipParams(float(alpha), float(bL), float(bR)) if np.ndim(alpha) == 0 else SlipParams(alpha, bL, bR)


def turning_radius(wL, wR, vp: VehicleParams):
    """``R = v/wz`` of the no-slip twist (inf for straight motion)."""
    wL, wR = np.asarray(wL, dtype=float), np.asarray(wR, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return 0.5 * vp.track_gauge * (wL + wR) / (wR - wL)


@dataclass(frozen=True)
class ExpChannel:
    """``y = -sign * c1 * exp(-c2 R)`` for R >= 0, mirrored (odd) for R < 0."""

    c1: float
    c2: float
    sign: float = 1.0
    rms: float = 0.0

    def __call__(self, R):
        R = np.asarray(R, dtype=float)
        mag = self.c1 * np.exp(-self.c2 * np.abs(np.where(np.isfinite(R), R, np.inf)))
        return -self.sign * np.where(R >= 0, 1.0, -1.0) * mag


@dataclass(frozen=True)
class ExpSlipModel:
    alpha: ExpChannel
    beta_L: ExpChannel
    beta_R: ExpChannel
    vp: VehicleParams = field(default_factory=VehicleParams)

    n_inputs = 2

    def predict(self, wL, wR, vx_sign=None, g_hat=None, smooth: bool = False):
        if g_hat is not None:
            raise ModelArityMismatch("exponential slip model takes no gravity input")
        R = turning_radius(wL, wR, self.vp)
        sgn = default_vx_sign(wL, wR) if vx_sign is None else np.where(np.asarray(vx_sign) < 0, -1.0, 1.0)
        return sgn * self.alpha(R), sgn * self.beta_L(R), sgn * self.beta_R(R)

    def to_json(self) -> dict:
        return {"schema": SCHEMA_VERSION, "kind": "exp_model",
                **{k: vars(getattr(self, k)) for k in CHANNELS}}

    @classmethod
    def from_json(cls, d, vp: VehicleParams = VehicleParams()):
        _check_schema(d, "exp_model")
        return cls(*(ExpChannel(**d[k]) for k in CHANNELS), vp=vp)


def fit_exp_channel(R, y) -> ExpChannel:
    """Least-squares fit of the odd exponential law to ``(R, y)`` samples."""
    R = np.asarray(R, dtype=float)
    y = np.asarray(y, dtype=float)
    if (np.all(R >= 0) or np.all(R < 0)) and np.ptp(np.abs(R)) < 0.1:
        raise DegenerateFit("turning radii span less than 0.1 m on one side")
    s = np.where(R >= 0, 1.0, -1.0)
    z = -s * y  # = sign * c1 * exp(-c2 |R|)
    a = np.abs(R)
    best = None
    for sign in (1.0, -1.0):
        zz = sign * z
        pos = zz > 0
        if pos.sum() >= 2 and np.ptp(a[pos]) > 0:
            slope, icpt = np.polyfit(a[pos], np.log(zz[pos]), 1)
            x0 = [max(np.exp(icpt), 1e-9), max(-slope, 1e-6)]
        else:
            x0 = [max(np.abs(zz).mean(), 1e-9), 1.0]
        res = least_squares(lambda p: p[0] * np.exp(-p[1] * a) - zz, x0, bounds=([0.0, 0.0], [np.inf, np.inf]),
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
        rms = float(np.sqrt(np.mean(res.fun ** 2)))
        if best is None or rms < best[2]:
            best = (res.x, sign, rms)
    (c1, c2), sign, rms = best
    return ExpChannel(float(c1), float(c2), sign, rms)


def fit_exp_model(ds: SlipDataset, vp: VehicleParams = VehicleParams(), wz_min: float = 1e-3) -> ExpSlipModel:
    wz = vp.sprocket_radius * (ds.wR - ds.wL) / vp.track_gauge
    keep = np.abs(wz) > wz_min
    if keep.sum() < 2:
        raise DegenerateFit("not enough turning records")
    R = turning_radius(ds.wL, ds.wR, vp)[keep]
    # reversing both tracks flips every slip channel at the same R
    sgn = np.where(ds.vx_sign[keep] < 0, -1.0, 1.0)
    chans = [fit_exp_channel(R, sgn * getattr(ds, c)[keep]) for c in CHANNELS]
    return ExpSlipModel(*chans, vp=vp)


def r_squared(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float)
    ss_res = np.sum((y_true - y_pred) ** 2)
    ss_tot = np.sum((y_true - y_true.mean()) ** 2)
    return float(1.0 - ss_res / ss_tot) if ss_tot > 0 else float(ss_res == 0)


def evaluate_models(models, ds: SlipDataset) -> dict:
    """R^2 and RMS of each channel against a (held-out) dataset."""
    g = ds.g_hat_body
    alpha, bL, bR = models.predict(ds.wL, ds.wR, ds.vx_sign, g)
    out = {}
    for name, pred in zip(CHANNELS, (alpha, bL, bR)):
        truth = getattr(ds, name)
        out[name] = {"r2": r_squared(truth, pred), "rms": float(np.sqrt(np.mean((truth - pred) ** 2)))}
    return out


def save_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj.to_json(), fh)


def load_models(path, vp: VehicleParams = VehicleParams()):
    with open(path) as fh:
        d = json.load(fh)
    if d.get("kind") == "exp_model":
        return ExpSlipModel.from_json(d, vp)
    return SlipModels.from_json(d)


def load_dataset(path) -> SlipDataset:
    with open(path) as fh:
        return SlipDataset.from_json(json.load(fh))
