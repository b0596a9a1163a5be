import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracksim.control import ReferencePoint
from tracksim.core import Pose2D, TerramechParams
from tracksim.dynamics2d import FlatSimConfig, FlatSimulator
from tracksim.errors import ConfigError, NumericalDivergence
from tracksim.harness import cli
from tracksim.harness.closed_loop import run_closed_loop, stack_references
from tracksim.harness.config import ExperimentConfig, load_config
from tracksim.harness.experiments import dataset_key, path_divergence
from tracksim.harness.metrics import Metrics, aggregate, compute_metrics, normalized_trace, read_series, write_series
from tracksim.harness.references import (
    ChicaneSpec,
    chicane_poses,
    chicane_reference,
    halton,
    halton_targets,
    target_discrepancy,
)
from tracksim.integrator import RK4, integrate
from tracksim.kinematics import unicycle_rhs
from tracksim.slipid import ZeroSlip


# ---------------------------------------------------------------- config

def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig(scenario="chicane", friction_mu=0.4, chicane={"t_end": 5.0})
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_json()))
    assert load_config(path) == cfg


@pytest.mark.parametrize("bad", [
    {"scenario": "chicane", "colour": "red"},
    {"scenario": "warp"},
    {"simulator": "flat"},
    {"scenario": "chicane", "schema": 2},
    {"scenario": "slope_chicane", "simulator": "flat"},
    {"scenario": "chicane", "planner": "DP"},
    {"scenario": "chicane", "vehicle": {"mass": -1.0}},
    {"scenario": "chicane", "n_targets": 0},
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_load_config_unreadable(tmp_path):
    (tmp_path / "x.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "x.json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_dataset_key_depends_on_physics_only():
    a = ExperimentConfig(scenario="identify", seed=1)
    b = ExperimentConfig(scenario="identify", seed=2, noise_std=0.5)
    c = ExperimentConfig(scenario="identify", friction_mu=0.6)
    assert dataset_key(a) == dataset_key(b)
    assert dataset_key(a) != dataset_key(c)


# ---------------------------------------------------------------- references

def test_chicane_poses_match_integrated_twist():
    spec = ChicaneSpec()
    x = np.zeros(3)
    t_prev = 0.0
    for t0, t1 in spec.segments():
        # ramp: v is linear in t, integrate with fine RK4 on (x, y, phi, t)
        def rhs(s, t):
            v, w = spec.twist(s[3] if s[3] < t1 - 1e-12 or t1 != spec.t1 else min(s[3], spec.t1 - 1e-12))
            return np.concatenate([unicycle_rhs(s[:3], v, w), [1.0]])

        x = integrate(RK4, rhs, np.append(x, t0), t0, t1, 4000)[:3]
        t_prev = t1
    xe, ye, pe = chicane_poses(spec, np.array([t_prev]))
    assert np.allclose([xe[0], ye[0], pe[0]], [x[0], x[1], np.arctan2(np.sin(x[2]), np.cos(x[2]))], atol=1e-9)


def test_chicane_reference_continuity_and_rotation():
    ts, ref = chicane_reference(dt=0.001)
    steps = np.hypot(np.diff(ref.x_d), np.diff(ref.y_d))
    assert steps.max() <= 0.2 * 0.001 + 1e-12
    origin = Pose2D(1.0, -2.0, 0.7)
    _, moved = chicane_reference(dt=0.01, origin=origin)
    _, base = chicane_reference(dt=0.01)
    c, s = np.cos(0.7), np.sin(0.7)
    assert np.allclose(moved.x_d, 1.0 + c * base.x_d - s * base.y_d)
    with pytest.raises(ValueError):
        ChicaneSpec(t1=3.0, t2=2.0)


def test_halton_sequence_values():
    h = halton(4, 3)
    assert np.allclose(h[:, 0], [0, 0.5, 0.25, 0.75])
    assert np.allclose(h[:, 1], [0, 1 / 3, 2 / 3, 1 / 9])


def test_halton_targets_in_annulus_and_deterministic():
    t = halton_targets(100)
    assert t == halton_targets(100)
    r = np.array([np.hypot(p.x, p.y) for p in t])
    assert np.all((r >= 2.0) & (r <= 4.0))
    rng = np.random.default_rng(0)
    rand = [Pose2D(*p) for p in np.column_stack([rng.uniform(-4, 4, (100, 2)), rng.uniform(0, 2 * np.pi, 100)])]
    assert target_discrepancy(t) < target_discrepancy(rand) * 1.5
    with pytest.raises(ValueError):
        halton_targets(5, r_min=3.0, r_max=2.0)


# ---------------------------------------------------------------- metrics

def test_compute_metrics_constant_error():
    t = np.linspace(0, 4, 401)
    m = compute_metrics(t, np.full_like(t, 0.1), -np.full_like(t, 0.2))
    assert m.mean_e_xy == pytest.approx(0.1) and m.max_e_xy == pytest.approx(0.1)
    assert m.mean_e_phi == pytest.approx(0.2)
    assert m.int_e_xy == pytest.approx(0.4) and m.Tf == 4.0


@settings(max_examples=30)
@given(st.lists(st.floats(0, 10), min_size=3, max_size=40), st.floats(0.5, 20))
def test_metric_invariants(values, Tf):
    t = np.linspace(0, Tf, len(values))
    e = np.array(values)
    m = compute_metrics(t, e, e)
    assert 0 <= m.mean_e_xy <= m.max_e_xy + 1e-12
    assert m.int_e_xy <= m.max_e_xy * Tf * (1 + 1e-12) + 1e-12


def test_metrics_reject_negative():
    with pytest.raises(ValueError):
        Metrics(-1, 0, 0, 0, 0, 0, 0, 1)


def test_normalized_trace_and_aggregate():
    s, e = normalized_trace(np.array([0, 2.0]), np.array([0, 2.0]), 2.0, n=5)
    assert np.allclose(e, [0, 0.5, 1, 1.5, 2])
    ms = [compute_metrics(np.array([0, 1.0]), np.full(2, v), np.zeros(2), converged=c)
          for v, c in ((0.1, True), (0.3, False))]
    agg = aggregate(ms)
    assert agg["mean_e_xy"]["mean"] == pytest.approx(0.2)
    assert agg["n"] == 2 and agg["non_converged"] == 1


def test_series_roundtrip_is_exact(tmp_path):
    t = np.linspace(0, 1, 7)
    cols = {"a": np.random.default_rng(0).normal(size=7), "b": np.pi * t}
    write_series(tmp_path / "s.csv", t, cols)
    back = read_series(tmp_path / "s.csv")
    assert np.array_equal(back["t"], t) and np.array_equal(back["a"], cols["a"])


def test_path_divergence():
    a = np.array([[0, 0], [1, 0], [2, 0.0]])
    b = np.array([[0, 0], [1, 0], [2, 0.2]])
    assert path_divergence(a, b) == pytest.approx(0.2 / (1 + np.hypot(1, 0.2)))


# ---------------------------------------------------------------- closed loop

def test_slc_with_zero_slip_equals_uc_in_closed_loop():
    sim = FlatSimulator(FlatSimConfig(tm=TerramechParams(friction_mu=0.4)))
    ts, ref = chicane_reference(t1=0.5, t2=1.0, t_end=1.5, dt=0.005)
    x0 = np.zeros((2, 6))
    x0[:, :3] = [0.05, 0.03, 0.01]
    ep = run_closed_loop(sim, x0, stack_references([ref, ref]), ["UC", "SLC"], ZeroSlip())
    assert np.array_equal(ep.states[:, 0], ep.states[:, 1])
    assert ep.e_xy.shape == (ts.size, 2)
    assert ep.e_xy[-1, 0] < 0.06


# ---------------------------------------------------------------- CLI

def write_cfg(tmp_path, **kw):
    d = {"scenario": "chicane", "controller": "UC", "chicane": {"t1": 0.5, "t2": 1.0, "t_end": 1.5}}
    d.update(kw)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(d))
    return p


def test_cli_track_outputs(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["track", "--config", str(write_cfg(tmp_path)), "--out", str(out), "--seed", "3"]) == 0
    payload = json.loads((out / "metrics.json").read_text())
    assert payload["config"]["seed"] == 3
    series = read_series(out / "track_UC.csv")
    m = payload["result"]["metrics"]["UC"]
    assert np.max(series["e_xy"]) == m["max_e_xy"]
    assert (out / "summary.csv").exists()


def test_cli_config_errors(tmp_path):
    out = str(tmp_path / "o")
    assert cli.main(["track", "--config", str(tmp_path / "nope.json"), "--out", out]) == cli.EXIT_CONFIG
    assert cli.main(["track", "--config", str(write_cfg(tmp_path, extra=1)), "--out", out]) == cli.EXIT_CONFIG
    # command/scenario mismatch
    assert cli.main(["stiffness", "--config", str(write_cfg(tmp_path)), "--out", out]) == cli.EXIT_CONFIG


def test_cli_divergence_exit_code(tmp_path, monkeypatch):
    def boom(self, *a, **k):
        raise NumericalDivergence("state magnitude exceeded 1e6")

    monkeypatch.setattr(FlatSimulator, "advance", boom)
    out = tmp_path / "out"
    assert cli.main(["track", "--config", str(write_cfg(tmp_path)), "--out", str(out)]) == cli.EXIT_DIVERGENCE
    assert "failed" in json.loads((out / "metrics.json").read_text())


def test_cli_parser_rejects_unknown_command():
    with pytest.raises(SystemExit):
        cli.main(["fly", "--config", "x", "--out", "y"])
