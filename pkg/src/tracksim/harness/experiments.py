"""Experiment campaigns: identification with a dataset cache, chicane
tracking (flat and sloped), the planner x controller matrix, the friction
sweep, the load-model comparison and the speed-dependent stiffness test."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..control import Gains
from ..core import Pose2D, twist_to_wheels
from ..dynamics2d import FlatSimConfig, FlatSimulator
from ..dynamics3d import NormalLoadModel, SlopeSimConfig, SlopeSimulator, patch_contacts_nonuniform, patch_stiffness
from ..errors import FitNonconvergence, Infeasible, NumericalDivergence
from ..planners import PlanRequest, Trajectory, plan_clothoid, plan_dubins, plan_ocp, time_series_reference
from ..planners.ocp import OcpSettings
from ..slipid import SweepSpec, collect_flat_dataset, collect_slope_dataset, fit_slip_models, load_dataset
from ..slipid import load_models, save_json
from ..terrain import initial_pose_on_terrain, make_flat, make_random_slope, patch_body_points
from .closed_loop import run_closed_loop, stack_references
from .config import ExperimentConfig
from .metrics import Metrics, aggregate, compute_metrics, write_rows, write_series
from .references import ChicaneSpec, chicane_reference, halton_targets

log = logging.getLogger(__name__)

CACHE_ENV = "TRACKSIM_CACHE"
DATASET_VERSION = 1
COMBOS = (("UC", "DP"), ("SLC", "DP"), ("UC", "CP"), ("SLC", "CP"), ("UC", "SLP"), ("SLC", "SLP"),
          ("SLC", "SLP_var"))
EPISODE_CHUNK = 64


# --------------------------------------------------------------------------- identification

def cache_dir(cfg: ExperimentConfig) -> Path:
    d = cfg.cache_dir or os.environ.get(CACHE_ENV) or os.path.join(os.path.expanduser("~"), ".cache", "tracksim")
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def sweep_spec(cfg: ExperimentConfig) -> SweepSpec:
    return SweepSpec(**cfg.sweep)


def flat_sim_config(cfg: ExperimentConfig, mu: float | None = None, noise: float = 0.0, seed: int = 0):
    return FlatSimConfig(cfg.vehicle_params(), cfg.terramech_params(mu), cfg.dt_sim, cfg.dt_ctrl, noise, seed)


def slope_sim_config(cfg: ExperimentConfig, mu: float | None = None, noise: float = 0.0, seed: int = 0,
                     mode: str | None = None, compliance=None):
    load = NormalLoadModel(mode or cfg.load_mode, compliance or cfg.compliance_params())
    return SlopeSimConfig(cfg.vehicle_params(), cfg.terramech_params(mu), load, cfg.dt_sim, cfg.dt_ctrl, noise, seed)


def dataset_key(cfg: ExperimentConfig, mu: float | None = None) -> str:
    """Hash of every setting the identification dataset depends on."""
    sweep = sweep_spec(cfg)
    d = {"version": DATASET_VERSION, "simulator": cfg.simulator, "mu": cfg.friction_mu if mu is None else mu,
         "vehicle": asdict(cfg.vehicle_params()), "tm": asdict(cfg.terramech_params(mu)),
         "sweep": asdict(sweep), "dt": [cfg.dt_sim, cfg.dt_ctrl]}
    if cfg.three_d:
        d["compliance"] = asdict(cfg.compliance_params())
        d["slopes"] = list(cfg.slopes)
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def identification_dataset(cfg: ExperimentConfig, mu: float | None = None):
    """Sweep dataset for ``cfg`` (and friction ``mu``), collected once and
    cached on disk."""
    path = cache_dir(cfg) / f"dataset_{cfg.simulator}_{dataset_key(cfg, mu)}.json"
    if path.exists():
        return load_dataset(path)
    t0 = time.perf_counter()
    if cfg.three_d:
        ds = collect_slope_dataset(slope_sim_config(cfg, mu), list(cfg.slopes), sweep_spec(cfg))
    else:
        ds = collect_flat_dataset(flat_sim_config(cfg, mu), sweep_spec(cfg))
    ds.meta["collect_seconds"] = time.perf_counter() - t0
    tmp = path.with_suffix(".tmp")
    save_json(ds, tmp)
    os.replace(tmp, path)
    return ds


def identify(cfg: ExperimentConfig, mu: float | None = None):
    """Slip models for ``cfg``: the configured model file if given, else
    regressors fitted to the (cached) sweep dataset."""
    if cfg.slip_models and mu is None:
        return load_models(cfg.slip_models, cfg.vehicle_params())
    path = cache_dir(cfg) / f"models_{cfg.simulator}_{dataset_key(cfg, mu)}.json"
    if path.exists():
        return load_models(path, cfg.vehicle_params())
    models = fit_slip_models(identification_dataset(cfg, mu))
    tmp = path.with_suffix(".tmp")
    save_json(models, tmp)
    os.replace(tmp, path)
    return models


# --------------------------------------------------------------------------- chicane tracking

@dataclass
class TrackingResult:
    metrics: dict = field(default_factory=dict)  # kind -> Metrics
    extra: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)  # kind -> {column: array}
    t: np.ndarray | None = None
    failed: str | None = None


def controller_kinds(cfg: ExperimentConfig) -> list[str]:
    return ["UC", "SLC"] if cfg.controller == "both" else [cfg.controller]


def chicane_spec(cfg: ExperimentConfig) -> ChicaneSpec:
    defaults = {"v_max": 0.6, "w_max": 0.4} if cfg.scenario == "slope_chicane" else {}
    return ChicaneSpec(**{**defaults, **cfg.chicane})


def slope_terrain(cfg: ExperimentConfig):
    kw = {"seed": cfg.seed, "amplitude": 0.6, "smoothness": 3, "extent": 30.0, "cell": 0.1, "tilt_rad": 0.0,
          "feature": 3.0}
    kw.update(cfg.terrain)
    if kw.pop("kind", "random") == "flat":
        return make_flat(kw["extent"], kw["cell"])
    return make_random_slope(**kw)


def run_tracking_experiment(cfg: ExperimentConfig, models=None, out_dir=None) -> TrackingResult:
    """Closed-loop chicane with every configured controller in one batch.

    The initial state is offset from the reference start by
    ``cfg.initial_offset`` (world frame).  A :class:`NumericalDivergence`
    marks the run failed instead of propagating.
    """
    kinds = controller_kinds(cfg)
    if "SLC" in kinds and models is None:
        models = identify(cfg)
    spec = chicane_spec(cfg)
    origin = Pose2D(*cfg.start)
    ts, ref = chicane_reference(spec.v_max, spec.w_max, spec.t1, spec.t2, spec.t_end, cfg.dt_ctrl, origin)
    refs = stack_references([ref] * len(kinds))
    off = np.asarray(cfg.initial_offset, dtype=float)
    if cfg.three_d:
        hf = slope_terrain(cfg)
        sim = SlopeSimulator(slope_sim_config(cfg, noise=cfg.noise_std, seed=cfg.seed), hf)
        x0 = initial_pose_on_terrain(hf, origin.x + off[0], origin.y + off[1], origin.phi + off[2],
                                     cfg.vehicle_params()).as_array()
    else:
        sim = FlatSimulator(flat_sim_config(cfg, noise=cfg.noise_std, seed=cfg.seed))
        x0 = np.zeros(6)
        x0[:3] = [origin.x + off[0], origin.y + off[1], origin.phi + off[2]]
    res = TrackingResult(t=ts)
    try:
        ep = run_closed_loop(sim, np.repeat(x0[None], len(kinds), axis=0), refs, kinds, models,
                             Gains(**cfg.gains), cfg.w_wheel_max)
    except NumericalDivergence as exc:
        res.failed = str(exc)
        log.warning("tracking run diverged: %s", exc)
        return res
    after = ts >= spec.t1 - 1e-9
    for i, kind in enumerate(kinds):
        res.metrics[kind] = compute_metrics(ts, ep.e_xy[:, i], ep.e_phi[:, i])
        res.extra[kind] = {"max_e_xy_after_ramp": float(ep.e_xy[after, i].max())}
        s = ep.states[:, i]
        cols = {"x": s[:, 0], "y": s[:, 1], "phi": s[:, 2]} if not cfg.three_d else \
            {"x": s[:, 0], "y": s[:, 1], "z": s[:, 2], "roll": s[:, 3], "pitch": s[:, 4], "yaw": s[:, 5]}
        cols.update({"x_d": ref.x_d, "y_d": ref.y_d, "phi_d": ref.phi_d, "v_d": ref.v_d, "wz_d": ref.wz_d,
                     "e_xy": ep.e_xy[:, i], "e_phi": ep.e_phi[:, i], "wL": ep.wheels[:, i, 0],
                     "wR": ep.wheels[:, i, 1], "alpha": ep.alpha[:, i]})
        res.series[kind] = cols
        if cfg.three_d:
            res.extra[kind]["pitch_range"] = [float(s[:, 4].min()), float(s[:, 4].max())]
    if out_dir is not None:
        for kind, cols in res.series.items():
            write_series(Path(out_dir) / f"track_{kind}.csv", ts, cols)
    return res


# --------------------------------------------------------------------------- planning

def plan_request(cfg: ExperimentConfig, target: Pose2D, variable_speed: bool = False, v_max=None) -> PlanRequest:
    vp = cfg.vehicle_params()
    if variable_speed:
        lo = 0.0 if cfg.v_min is None else cfg.v_min
        hi = cfg.v_des if v_max is None else v_max
        return PlanRequest(Pose2D(), target, cfg.v_des, lo, hi, cfg.w_wheel_max, cfg.dt_ctrl, vp)
    return PlanRequest(Pose2D(), target, cfg.v_des, cfg.v_des, cfg.v_des, cfg.w_wheel_max, cfg.dt_ctrl, vp)


def planners_for(cfg: ExperimentConfig) -> list[str]:
    if cfg.planner == "all":
        return ["DP", "CP", "SLP", "SLP_var"]
    if cfg.planner == "none":
        return []
    return [cfg.planner]


@dataclass
class PlanOutcome:
    traj: Trajectory | None
    converged: bool = True
    iterations: int = 0
    violation: float = 0.0
    terminal_error: float = 0.0
    seconds: float = 0.0
    error: str | None = None


def plan_target(cfg: ExperimentConfig, target: Pose2D, models, planners) -> dict:
    """Every requested planner for one target.  SLP variants are warm
    started from the Dubins plan."""
    out: dict[str, PlanOutcome] = {}
    settings = OcpSettings(**cfg.ocp)
    dubins = None
    for name in ["DP"] + [p for p in planners if p != "DP"]:
        t0 = time.perf_counter()
        try:
            if name == "DP":
                dubins = plan_dubins(plan_request(cfg, target))
                out[name] = PlanOutcome(dubins)
            elif name == "CP":
                out[name] = PlanOutcome(plan_clothoid(plan_request(cfg, target)))
            else:
                req = plan_request(cfg, target, variable_speed=name == "SLP_var")
                traj, sol = plan_ocp(req, models, dubins, settings)
                out[name] = PlanOutcome(traj, sol.converged, sol.iterations, sol.constraint_violation,
                                        sol.terminal_error)
        except (FitNonconvergence, Infeasible, ValueError) as exc:
            out[name] = PlanOutcome(None, False, error=str(exc))
        out[name].seconds = time.perf_counter() - t0
    if "DP" not in planners:
        out.pop("DP")
    return out


def _plan_job(args):
    cfg, target, models, planners = args
    return plan_target(cfg, target, models, planners)


def plan_all(cfg: ExperimentConfig, targets, models, planners, jobs: int = 1) -> list[dict]:
    work = [(cfg, t, models, planners) for t in targets]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_plan_job, work))
    return [_plan_job(w) for w in work]


# --------------------------------------------------------------------------- planner x controller matrix

@dataclass
class MatrixResult:
    rows: list = field(default_factory=list)  # dicts: target, combo, metrics, plan info
    summary: dict = field(default_factory=dict)  # combo -> aggregate
    traces: dict = field(default_factory=dict)  # combo -> (n_targets, 1000) normalized e_xy
    plans: list = field(default_factory=list)


def matrix_combos(cfg: ExperimentConfig) -> list[tuple[str, str]]:
    kinds = controller_kinds(cfg)
    planners = planners_for(cfg) or ["DP", "CP", "SLP", "SLP_var"]
    return [(c, p) for c, p in COMBOS if c in kinds and p in planners]


def run_planner_matrix(cfg: ExperimentConfig, targets=None, models=None, out_dir=None, jobs: int = 1) -> MatrixResult:
    """Plan every target with each planner and track each plan with each
    controller on the flat simulator; per-run metrics and aggregates.

    Episodes start exactly at the plan start and run for the plan duration.
    OCP runs that stop at the iteration cap are tracked from their best
    iterate and counted as non-converged.
    """
    from .metrics import normalized_trace

    if targets is None:
        targets = (halton_targets(cfg.n_targets, *cfg.annulus, cfg.halton_extent)
                   if cfg.scenario == "halton_stats" else cfg.target_poses())
    if models is None:
        models = identify(cfg)
    combos = matrix_combos(cfg)
    planners = sorted({p for _, p in combos})
    plans = plan_all(cfg, targets, models, planners, jobs)
    episodes = []
    for i, plan in enumerate(plans):
        for kind, pname in combos:
            po = plan[pname]
            if po.traj is not None:
                episodes.append((i, kind, pname, po))
    episodes.sort(key=lambda e: (e[3].traj.duration_Tf, e[0], e[1], e[2]))
    result = MatrixResult(plans=plans)
    traces: dict = {}
    for c0 in range(0, len(episodes), EPISODE_CHUNK):
        chunk = episodes[c0:c0 + EPISODE_CHUNK]
        t_end = max(e[3].traj.duration_Tf for e in chunk)
        refs = []
        for _, _, _, po in chunk:
            ts, r = time_series_reference(po.traj, cfg.dt_ctrl, t_end)
            refs.append(r)
        sim = FlatSimulator(flat_sim_config(cfg, noise=cfg.noise_std, seed=cfg.seed + c0))
        x0 = np.zeros((len(chunk), 6))
        ep = run_closed_loop(sim, x0, stack_references(refs), [e[1] for e in chunk], models, Gains(**cfg.gains),
                             cfg.w_wheel_max)
        for j, (i, kind, pname, po) in enumerate(chunk):
            Tf = po.traj.duration_Tf
            m = compute_metrics(ep.t, ep.e_xy[:, j], ep.e_phi[:, j], Tf, po.converged)
            dubins_tf = plans[i]["DP"].traj.duration_Tf if "DP" in plans[i] and plans[i]["DP"].traj else np.nan
            result.rows.append({"target": i, "combo": f"{kind}-{pname}", "metrics": m,
                                "Tf_ratio": Tf / dubins_tf, "plan_seconds": po.seconds,
                                "iterations": po.iterations, "violation": po.violation})
            _, tr = normalized_trace(ep.t[ep.t <= Tf + 1e-9], ep.e_xy[ep.t <= Tf + 1e-9, j], Tf)
            traces.setdefault(f"{kind}-{pname}", {})[i] = tr
    result.rows.sort(key=lambda r: (r["target"], r["combo"]))
    for combo in sorted({r["combo"] for r in result.rows}):
        rows = [r for r in result.rows if r["combo"] == combo]
        agg = aggregate([r["metrics"] for r in rows])
        ratios = np.array([r["Tf_ratio"] for r in rows])
        agg["Tf_ratio"] = float(np.nanmean(ratios))
        agg["plan_seconds"] = float(np.mean([r["plan_seconds"] for r in rows]))
        agg["planning_failures"] = int(sum(plans[i][combo.split("-", 1)[1]].traj is None for i in range(len(plans))))
        result.summary[combo] = agg
        result.traces[combo] = np.array([traces[combo][i] for i in sorted(traces[combo])])
    if out_dir is not None:
        write_matrix(result, Path(out_dir), targets)
    return result


def write_matrix(result: MatrixResult, out: Path, targets) -> None:
    write_rows(out / "targets.csv", ["target", "x", "y", "phi"],
               [[i, t.x, t.y, t.phi] for i, t in enumerate(targets)])
    cols = list(Metrics.__dataclass_fields__)
    write_rows(out / "runs.csv", ["target", "combo"] + cols + ["Tf_ratio", "plan_seconds", "iterations"],
               [[r["target"], r["combo"], *[getattr(r["metrics"], c) for c in cols], r["Tf_ratio"],
                 r["plan_seconds"], r["iterations"]] for r in result.rows])
    s = np.linspace(0.0, 1.0, next(iter(result.traces.values())).shape[1]) if result.traces else []
    for combo, tr in result.traces.items():
        write_series(out / f"normalized_e_xy_{combo}.csv", s,
                     {"mean": tr.mean(axis=0), "std": tr.std(axis=0)})


# --------------------------------------------------------------------------- friction sweep

def run_friction_sweep(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Variable-speed OCP towards the first target for each friction level,
    each with its own identified slip models."""
    target = cfg.target_poses()[0]
    v_max = 0.8 if cfg.v_max is None else cfg.v_max
    out = {}
    for mu in cfg.frictions:
        models = identify(cfg, mu)
        dubins = plan_dubins(plan_request(cfg, target))
        req = plan_request(cfg, target, variable_speed=True, v_max=v_max)
        traj, sol = plan_ocp(req, models, dubins, OcpSettings(**cfg.ocp))
        wh = twist_to_wheels(traj.v_d, traj.wz_d, cfg.vehicle_params())
        alpha, bL, bR = models.predict(wh.wL, wh.wR, smooth=True)
        out[mu] = {"Tf": sol.Tf, "converged": sol.converged, "iterations": sol.iterations,
                   "terminal_error": sol.terminal_error, "max_abs_alpha": float(np.max(np.abs(alpha)))}
        if out_dir is not None:
            write_series(Path(out_dir) / f"friction_{mu}.csv", traj.t,
                         {"s": traj.t / traj.duration_Tf, "x": traj.x, "y": traj.y, "phi": traj.phi,
                          "v_d": traj.v_d, "wz_d": traj.wz_d, "alpha": alpha, "beta_L": bL, "beta_R": bR})
    return out


# --------------------------------------------------------------------------- load comparison

def open_loop_chicane(sim, x0, spec: ChicaneSpec, vp):
    """Open-loop chicane wheel commands (no-slip inverse of the reference
    twist); returns tick times, states and mean seconds per simulation step."""
    n = int(round(spec.t_end / sim.cfg.dt_ctrl))
    ts = np.arange(n + 1) * sim.cfg.dt_ctrl
    v, w = spec.twist(ts)
    wh = twist_to_wheels(v, w, vp)
    x = np.asarray(x0, dtype=float)
    states = np.empty((n + 1, x.size))
    states[0] = x
    t0 = time.perf_counter()
    for k in range(n):
        x = sim.advance(x, wh.wL[k], wh.wR[k])
        states[k + 1] = x
    per_step = (time.perf_counter() - t0) / (n * sim.n_sim)
    return ts, states, per_step


def path_divergence(a, b) -> float:
    """End-point separation of two XY paths over the length of the second."""
    length = np.sum(np.hypot(np.diff(b[:, 0]), np.diff(b[:, 1])))
    return float(np.hypot(*(a[-1, :2] - b[-1, :2])) / length)


def run_load_comparison(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Uniform vs nonuniform load on flat ground and on the sloped terrain:
    path divergence and per-step cost of each mode."""
    spec = ChicaneSpec(**{"v_max": 0.8, "w_max": 0.6, **cfg.chicane})
    vp = cfg.vehicle_params()
    report = {}
    for name, hf in (("flat", make_flat(30.0, 0.1)), ("slope", slope_terrain(cfg))):
        paths, cost = {}, {}
        for mode in ("uniform", "nonuniform"):
            sim = SlopeSimulator(slope_sim_config(cfg, mode=mode), hf)
            x0 = initial_pose_on_terrain(hf, *cfg.start, vp).as_array()
            ts, states, per_step = open_loop_chicane(sim, x0, spec, vp)
            paths[mode], cost[mode] = states, per_step
            if out_dir is not None:
                write_series(Path(out_dir) / f"load_{name}_{mode}.csv", ts,
                             {"x": states[:, 0], "y": states[:, 1], "z": states[:, 2], "roll": states[:, 3],
                              "pitch": states[:, 4], "yaw": states[:, 5]})
        report[name] = {"divergence": path_divergence(paths["uniform"], paths["nonuniform"]),
                        "seconds_per_step": cost,
                        "cost_ratio": cost["nonuniform"] / cost["uniform"]}
    return report


# --------------------------------------------------------------------------- stiffness test

def run_stiffness_test(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Straight run on soft flat ground with the speed ramped linearly;
    records the largest stiffness among loaded left-track patches."""
    kw = {"v_end": 1.4, "duration": 10.0, "k_lin": 5000.0, "k_speed_Ktp": 10.5}
    kw.update(cfg.stiffness)
    vp = cfg.vehicle_params()
    comp = cfg.compliance_params().__class__(**{**asdict(cfg.compliance_params()), "k_lin": kw["k_lin"],
                                                "k_speed_Ktp": kw["k_speed_Ktp"]})
    hf = make_flat(30.0, 0.1)
    sim = SlopeSimulator(slope_sim_config(cfg, mode="nonuniform", compliance=comp), hf)
    x = initial_pose_on_terrain(hf, *cfg.start, vp).as_array()
    n = int(round(kw["duration"] / cfg.dt_ctrl))
    ts = np.arange(n + 1) * cfg.dt_ctrl
    v_d = kw["v_end"] * ts / kw["duration"]
    b = patch_body_points(vp)
    left = b[:, 1] > 0
    k_max = np.empty(n + 1)
    vx = np.empty(n + 1)
    for k in range(n + 1):
        pc = patch_contacts_nonuniform(x, hf, comp, vp, b)
        kp = patch_stiffness(comp.k_lin, comp.k_speed_Ktp, b[:, 0], x[6], vp.track_semilength)
        loaded = left & (pc.rho > 0)
        k_max[k] = kp[loaded].max() if np.any(loaded) else np.nan
        vx[k] = x[6]
        if k < n:
            w = v_d[k] / vp.sprocket_radius
            x = sim.advance(x, w, w)
    if out_dir is not None:
        write_series(Path(out_dir) / "stiffness.csv", ts, {"v_d": v_d, "vx": vx, "k_max_left": k_max})
    return {"k_start": float(k_max[0]), "k_end": float(k_max[-1]), "vx_end": float(vx[-1]),
            "k_nominal": comp.k_lin}


__all__ = ["identify", "identification_dataset", "run_tracking_experiment", "run_planner_matrix",
           "run_friction_sweep", "run_load_comparison", "run_stiffness_test", "TrackingResult", "MatrixResult"]
