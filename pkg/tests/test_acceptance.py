"""End-to-end acceptance checks.  Each test prints one PASS/FAIL line; the
lines are repeated in the terminal summary.  The long campaigns share
module-scoped fixtures; identification datasets are cached on disk."""

import os
import time

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import least_squares

from tracksim.control import Gains, ReferencePoint, simulate_ideal, slc_step, uc_step, world_error
from tracksim.core import Pose2D, VehicleParams, twist_to_wheels
from tracksim.harness import experiments as ex
from tracksim.harness.config import ExperimentConfig
from tracksim.harness.references import ChicaneSpec, SpiralSpec, halton_targets
from tracksim.integrator import RK4, integrate
from tracksim.planners import PlanRequest, plan_dubins
from tracksim.planners.common import max_curvature
from tracksim.planners.dubins import dubins_words, shortest_path
from tracksim.slipid import (
    ExpChannel,
    ExpSlipModel,
    ZeroSlip,
    collect_flat_dataset,
    evaluate_models,
    fit_exp_channel,
    fit_exp_model,
)
from tracksim.terramechanics import shear_displacement

pytestmark = pytest.mark.slow

VP = VehicleParams()
JOBS = os.cpu_count() or 1


def flat_cfg(mu, **kw):
    return ExperimentConfig(scenario="identify", simulator="flat", friction_mu=mu, **kw)


# --------------------------------------------------------------------------- 1

def quad_shear(x_p, y_p, vx, vy, wz, w, phi):
    ell, wr = VP.track_semilength, w * VP.sprocket_radius
    t_end = (ell - x_p) / wr

    def vel(tau, k):
        x = ell - wr * tau
        ux, uy = vx - wz * y_p - wr, vy + wz * x
        h = phi + wz * tau
        return np.cos(h) * ux - np.sin(h) * uy if k == 0 else np.sin(h) * ux + np.cos(h) * uy

    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    return np.array([quad(vel, 0.0, t_end, args=(k,), **opts)[0] for k in (0, 1)])


def test_01_shear_displacement_closed_form(report):
    rng = np.random.default_rng(1)
    ell = VP.track_semilength
    n = 1000
    cases = np.column_stack([rng.uniform(-ell, ell, n), rng.uniform(-0.4, 0.4, n), rng.uniform(-1, 1, n),
                             rng.uniform(-0.5, 0.5, n), rng.uniform(-3, 3, n),
                             rng.choice([-1, 1], n) * rng.uniform(0.5, 15, n), rng.uniform(-np.pi, np.pi, n)])
    t0 = time.perf_counter()
    worst = 0.0
    for c in cases:
        sd = shear_displacement(*c, VP)
        ref = quad_shear(*c)
        rel = np.hypot(sd.jx - ref[0], sd.jy - ref[1]) / max(np.hypot(*ref), 1e-12)
        worst = max(worst, rel)
    dt = time.perf_counter() - t0
    ok = report(1, worst <= 1e-8 and dt < 10.0, f"worst relative error {worst:.2e} over {n} cases, {dt:.1f} s")
    assert ok


# --------------------------------------------------------------------------- 2

def test_02_rk4_order(report):
    t0 = time.perf_counter()
    odes = [
        (lambda x, t: -x, np.array([1.0]), np.exp(-1.0)),
        (lambda x, t: np.array([x[1], -x[0]]), np.array([1.0, 0.0]), np.array([np.cos(1.0), -np.sin(1.0)])),
        (lambda x, t: x * np.cos(t), np.array([1.0]), np.exp(np.sin(1.0))),
    ]
    orders = []
    for rhs, x0, exact in odes:
        errs = [np.max(np.abs(integrate(RK4, rhs, x0, 0.0, 1.0, k) - exact)) for k in (10, 20, 40)]
        orders.append(np.log2(errs[1] / errs[2]))
    dt = time.perf_counter() - t0
    ok = report(2, all(3.8 <= p <= 4.2 for p in orders) and dt < 1.0,
                f"orders {', '.join(f'{p:.3f}' for p in orders)}, {dt:.2f} s")
    assert ok


# --------------------------------------------------------------------------- 3

def lyapunov_run(model, twist, x0, t0, t1, dt, g=Gains()):
    def alpha_of(v, w):
        wd = twist_to_wheels(v, w, VP)
        return model.predict(wd.wL, wd.wR)[0]

    def law(pose, ref, t):
        h = 1e-6
        rate = (alpha_of(*twist(t + h)) - alpha_of(*twist(t - h))) / (2 * h)
        out = slc_step(pose, ref, g, model, VP, alpha_d_rate=rate)
        return out.v_cmd, out.wz_cmd, out.diagnostics.alpha_used

    t, s = simulate_ideal(law, twist, x0, t1, dt, t0)
    a = np.array([alpha_of(*twist(ti)) for ti in t])
    err = world_error(s[:, :3], ReferencePoint(s[:, 3], s[:, 4], s[:, 5], 0.0, 0.0))
    V = 0.5 * (err.e_x ** 2 + err.e_y ** 2) + 1.0 - np.cos(err.e_phi + a)
    return s, V


def test_03_lyapunov_decrease(report):
    model = ExpSlipModel(ExpChannel(0.3, 0.5), ExpChannel(0.05, 0.3), ExpChannel(0.05, 0.3, -1.0), VP)
    t0 = time.perf_counter()
    spiral = SpiralSpec()
    _, V = lyapunov_run(model, lambda t: (spiral.v, spiral.w_rate * t), [0.3, 0.3, 0.2], 0.0, 3.0, 5e-3)
    worst_spiral = np.diff(V).max()
    spec = ChicaneSpec()
    x = np.array([0.05, 0.03, 0.01])
    worst_chicane = -np.inf
    for a, b in spec.segments():
        # each piece sees only its own one-sided twist, so the jumps fall on step boundaries
        def tw(t, a=a, b=b):
            v, w = spec.twist(min(max(t, a + 1e-12), b - 1e-12))
            return float(v), float(w)

        s, V = lyapunov_run(model, tw, x, a, b, 2e-2)
        worst_chicane = max(worst_chicane, np.diff(V).max())
        x = s[-1]
    dt = time.perf_counter() - t0
    ok = report(3, max(worst_spiral, worst_chicane) <= 1e-9 and dt < 5.0,
                f"max dV spiral {worst_spiral:.2e}, chicane {worst_chicane:.2e}, {dt:.1f} s")
    assert ok


# --------------------------------------------------------------------------- 4

def test_04_slc_degenerates_to_uc(report):
    rng = np.random.default_rng(4)
    n = 10_000
    pose = np.column_stack([rng.uniform(-3, 3, n), rng.uniform(-3, 3, n), rng.uniform(-np.pi, np.pi, n)])
    ref = ReferencePoint(rng.uniform(-3, 3, n), rng.uniform(-3, 3, n), rng.uniform(-np.pi, np.pi, n),
                         rng.uniform(-0.8, 0.8, n), rng.uniform(-1.5, 1.5, n))
    g = Gains(rng.uniform(0.5, 20), rng.uniform(0.5, 5))
    same = 0
    for w_max in (None, 18.0):
        uc = uc_step(pose, ref, g, VP, w_max)
        slc = slc_step(pose, ref, g, ZeroSlip(), VP, w_max=w_max)
        same += int(np.array_equal(uc.wheels.wL, slc.wheels.wL) and np.array_equal(uc.wheels.wR, slc.wheels.wR)
                    and np.array_equal(uc.v_cmd, slc.v_cmd) and np.array_equal(uc.wz_cmd, slc.wz_cmd))
    ok = report(4, same == 2, f"{n} random states, bitwise equal with and without saturation: {same == 2}")
    assert ok


# --------------------------------------------------------------------------- 5

def test_05_flat_chicane(report):
    cfg = ExperimentConfig(scenario="chicane", friction_mu=0.1)
    models = ex.identify(cfg)
    t0 = time.perf_counter()
    res = ex.run_tracking_experiment(cfg, models)
    dt = time.perf_counter() - t0
    assert res.failed is None
    slc = res.extra["SLC"]["max_e_xy_after_ramp"]
    uc = res.extra["UC"]["max_e_xy_after_ramp"]
    ok = report(5, slc <= 0.05 and uc >= 2 * slc and dt < 60.0,
                f"max e_xy after ramp SLC {slc:.4f} m, UC {uc:.4f} m (whole run SLC "
                f"{res.metrics['SLC'].max_e_xy:.4f}, UC {res.metrics['UC'].max_e_xy:.4f}), {dt:.1f} s")
    assert ok


# --------------------------------------------------------------------------- 6 and 13

@pytest.fixture(scope="module")
def flat_01():
    cfg = flat_cfg(0.1)
    ds = ex.identification_dataset(cfg)
    models = ex.identify(cfg)
    rng = np.random.default_rng(7)
    wl, wr = rng.uniform(-9.5, 9.5, 150), rng.uniform(-9.5, 9.5, 150)
    held_out = collect_flat_dataset(ex.flat_sim_config(cfg), ex.sweep_spec(cfg), pairs=(wl, wr))
    return ds, models, held_out


def test_06_identification_fidelity(report, flat_01):
    ds, models, held_out = flat_01
    r2 = {k: v["r2"] for k, v in evaluate_models(models, held_out).items()}
    secs = ds.meta.get("collect_seconds", np.nan)
    ok = report(6, min(r2.values()) >= 0.99 and secs < 1800,
                f"held-out R2 {', '.join(f'{k} {v:.5f}' for k, v in r2.items())} on {len(held_out)} pairs; "
                f"sweep {secs:.0f} s")
    assert ok


def test_13_exponential_model(report, flat_01):
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(20):
        c1, c2, sign = rng.uniform(0.01, 1.0), rng.uniform(0.05, 3.0), rng.choice([-1.0, 1.0])
        R = np.concatenate([rng.uniform(0.05, 6.0, 60), -rng.uniform(0.05, 6.0, 60)])
        fit = fit_exp_channel(R, ExpChannel(c1, c2, sign)(R))
        worst = max(worst, abs(fit.c1 - c1) / c1, abs(fit.c2 - c2) / c2)
    ds, models, held_out = flat_01
    exp = fit_exp_model(ds, VP)
    e_rms = evaluate_models(exp, held_out)
    g_rms = evaluate_models(models, held_out)
    ordered = all(e_rms[c]["rms"] >= g_rms[c]["rms"] for c in e_rms)
    ok = report(13, worst <= 1e-6 and ordered,
                f"synthetic (c1, c2) worst relative error {worst:.1e}; held-out RMS exp/grid "
                + ", ".join(f"{c} {e_rms[c]['rms']:.4f}/{g_rms[c]['rms']:.4f}" for c in e_rms))
    assert ok


# --------------------------------------------------------------------------- 7

def test_07_friction_monotonicity(report):
    tie = 1e-3
    alphas = {}
    for mu in (0.1, 0.4, 0.6):
        ds = ex.identification_dataset(flat_cfg(mu))
        order = np.lexsort((ds.wR, ds.wL))
        alphas[mu] = (np.column_stack([ds.wL, ds.wR])[order], np.abs(ds.alpha[order]))
    grids = [a[0] for a in alphas.values()]
    assert all(np.array_equal(grids[0], g) for g in grids[1:]), "surfaces must share the sweep grid"
    d1 = alphas[0.1][1] - alphas[0.4][1]
    d2 = alphas[0.4][1] - alphas[0.6][1]
    strict = int(np.sum(d1 < 0) + np.sum(d2 < 0))
    ok = report(7, d1.min() >= -tie and d2.min() >= -tie,
                f"min |a(0.1)|-|a(0.4)| {d1.min():.2e}, min |a(0.4)|-|a(0.6)| {d2.min():.2e} rad "
                f"(tie tolerance {tie:g}; {strict} strict inversions on {d1.size} points)")
    assert ok


# --------------------------------------------------------------------------- 8

def _segment(x, y, h, kind, length, rho):
    if kind == "S":
        return x + length * np.cos(h), y + length * np.sin(h), h
    k = 1.0 if kind == "L" else -1.0
    dh = k * length / rho
    # chord of the arc
    chord = 2 * rho * np.sin(length / (2 * rho))
    return x + chord * np.cos(h + dh / 2), y + chord * np.sin(h + dh / 2), h + dh


def _word_miss(word, s1, s2, c0, cf, rho):
    """Position miss of a word after choosing the last segment to fix the
    final heading.  Returns (miss_x, miss_y, total length)."""
    x, y, h = _segment(c0.x, c0.y, c0.phi, word[0], s1, rho)
    x, y, h = _segment(x, y, h, word[1], s2, rho)
    k = 1.0 if word[2] == "L" else -1.0
    s3 = rho * np.mod(k * (cf.phi - h), 2 * np.pi)
    x, y, h = _segment(x, y, h, word[2], s3, rho)
    return x - cf.x, y - cf.y, s1 + s2 + s3


def brute_force_length(c0, cf, rho, n=160):
    """Shortest three-segment path found by grid search over the first two
    segment lengths and local refinement."""
    best = np.inf
    d = np.hypot(cf.x - c0.x, cf.y - c0.y)
    for word in ("LSL", "RSR", "LSR", "RSL", "RLR", "LRL"):
        hi2 = 2 * np.pi * rho if word[1] != "S" else d + 4 * rho
        a1 = np.linspace(0.0, 2 * np.pi * rho, n, endpoint=False)
        a2 = np.linspace(0.0, hi2, n)
        S1, S2 = np.meshgrid(a1, a2, indexing="ij")
        mx, my, _ = _word_miss(word, S1, S2, c0, cf, rho)
        miss = np.hypot(mx, my)
        pad = np.pad(miss, 1, mode="edge")
        local = np.ones_like(miss, dtype=bool)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di or dj:
                    local &= miss <= pad[1 + di:1 + di + n, 1 + dj:1 + dj + n]
        cand = np.argwhere(local & (miss < 0.5 * rho))
        for i, j in cand:
            sol = least_squares(lambda p: _word_miss(word, p[0], p[1], c0, cf, rho)[:2], [S1[i, j], S2[i, j]],
                                bounds=([0.0, 0.0], [2 * np.pi * rho, hi2]), xtol=1e-14, ftol=1e-14, gtol=1e-14)
            mx, my, L = _word_miss(word, sol.x[0], sol.x[1], c0, cf, rho)
            if np.hypot(mx, my) < 1e-8:
                best = min(best, L)
    return best


def test_08_dubins_optimality(report):
    targets = halton_targets(100)
    rho = 1.0 / max_curvature(0.4, 18.0, VP)
    c0 = Pose2D()
    worst_word = -np.inf
    worst_brute = -np.inf
    for cf in targets:
        best = shortest_path(c0, cf, rho).length
        worst_word = max(worst_word, best - min(p.length for p in dubins_words(c0, cf, rho).values()))
        worst_brute = max(worst_brute, best / brute_force_length(c0, cf, rho) - 1.0)
    Tf = plan_dubins(PlanRequest(Pose2D(), Pose2D(2.0, 2.5, -0.4))).duration_Tf
    ok = report(8, worst_word <= 1e-12 and worst_brute <= 1e-3 and abs(Tf - 8.12) <= 0.02 * 8.12,
                f"shortest minus best word {worst_word:.1e} m, worst excess over brute force "
                f"{100 * worst_brute:.4f}%, benchmark Tf {Tf:.4f} s")
    assert ok


# --------------------------------------------------------------------------- 9 and 10

@pytest.fixture(scope="module")
def matrix():
    cfg = ExperimentConfig(scenario="halton_stats", friction_mu=0.4, planner="all", v_des=0.4)
    models = ex.identify(cfg)
    t0 = time.perf_counter()
    res = ex.run_planner_matrix(cfg, models=models, jobs=JOBS)
    return res, time.perf_counter() - t0


def test_09_planner_matrix_ordering(report, matrix):
    res, secs = matrix
    m = {c: a["mean_e_xy"]["mean"] for c, a in res.summary.items()}
    order = (m["UC-DP"] > max(m["SLC-DP"], m["UC-SLP"]) and min(m["SLC-DP"], m["UC-SLP"]) > m["SLC-SLP"]
             and m["SLC-SLP"] >= m["SLC-CP"])
    brackets = 0.1 <= m["UC-DP"] <= 0.3 and 0.01 <= m["SLC-CP"] <= 0.06
    ok = report(9, order and brackets and secs < 7200,
                "mean e_xy " + ", ".join(f"{c} {v:.3f}" for c, v in sorted(m.items(), key=lambda kv: -kv[1]))
                + f"; {secs / 60:.0f} min with {JOBS} worker(s)")
    assert ok


def test_10_ocp_feasibility(report, matrix):
    res, _ = matrix
    viol, slack, total, nonconv = 0.0, 0.0, 0, 0
    for plan in res.plans:
        for name in ("SLP", "SLP_var"):
            po = plan[name]
            total += 1
            if po.traj is None or not po.converged:
                nonconv += 1
                continue
            viol = max(viol, po.violation)
            slack = max(slack, po.terminal_error)
    rate = nonconv / total
    ok = report(10, viol <= 1e-3 and slack <= 0.02 and rate <= 0.4,
                f"converged: max residual {viol:.1e}, max terminal error {slack:.4f} m; "
                f"non-converged {nonconv}/{total} ({100 * rate:.0f}%)")
    assert ok


# --------------------------------------------------------------------------- 11

def test_11_slope_tracking(report):
    cfg = ExperimentConfig(scenario="slope_chicane", simulator="slope_uniform", friction_mu=0.6)
    res = ex.run_tracking_experiment(cfg, ex.identify(cfg))
    assert res.failed is None
    slc, uc = res.metrics["SLC"].mean_e_xy, res.metrics["UC"].mean_e_xy
    pitch = res.extra["SLC"]["pitch_range"]
    ok = report(11, slc <= 0.10 and slc <= 0.5 * uc,
                f"mean body-frame e_xy SLC {slc:.4f} m, UC {uc:.4f} m (ratio {slc / uc:.2f}); "
                f"pitch {pitch[0]:.2f} to {pitch[1]:.2f} rad")
    assert ok


# --------------------------------------------------------------------------- 12

def test_12_load_model_divergence(report):
    cfg = ExperimentConfig(scenario="load_comparison", simulator="slope_nonuniform", friction_mu=0.6)
    rep = ex.run_load_comparison(cfg)
    flat, slope = rep["flat"], rep["slope"]
    ok = report(12, flat["divergence"] < 0.02 and slope["divergence"] >= 0.10 and slope["cost_ratio"] >= 5,
                f"divergence flat {100 * flat['divergence']:.2f}%, slope {100 * slope['divergence']:.1f}%; "
                f"nonuniform/uniform step cost {slope['cost_ratio']:.1f}x")
    assert ok
