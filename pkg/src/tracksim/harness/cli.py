"""``tracksim`` command line: identify | track | plan | matrix | compare-load | stiffness."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigError, NumericalDivergence
from ..slipid import evaluate_models, fit_exp_model, save_json
from . import experiments as ex
from .config import load_config
from .metrics import write_rows

EXIT_OK, EXIT_DIVERGENCE, EXIT_CONFIG = 0, 2, 3

COMMAND_SCENARIOS = {
    "identify": ("identify",),
    "track": ("chicane", "slope_chicane"),
    "plan": ("planner_matrix", "halton_stats", "friction_sweep"),
    "matrix": ("planner_matrix", "halton_stats", "friction_sweep"),
    "compare-load": ("load_comparison",),
    "stiffness": ("stiffness_test",),
}


def _jsonable(o):
    if hasattr(o, "to_dict"):
        return o.to_dict()
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return o


def _write_metrics(out: Path, payload: dict) -> None:
    with open(out / "metrics.json", "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)


def cmd_identify(cfg, out: Path, jobs: int) -> dict:
    ds = ex.identification_dataset(cfg)
    models = ex.identify(cfg)
    save_json(ds, out / "dataset.json")
    save_json(models, out / "slip_models.json")
    report = {"records": len(ds), "dataset": ds.meta, "fit": evaluate_models(models, ds)}
    if not cfg.three_d:
        exp = fit_exp_model(ds, cfg.vehicle_params())
        save_json(exp, out / "exp_model.json")
        report["exp_fit"] = evaluate_models(exp, ds)
    write_rows(out / "summary.csv", ["channel", "grid_r2", "grid_rms"],
               [[c, v["r2"], v["rms"]] for c, v in report["fit"].items()])
    return report


def cmd_track(cfg, out: Path, jobs: int) -> dict:
    res = ex.run_tracking_experiment(cfg, out_dir=out)
    if res.failed:
        raise NumericalDivergence(res.failed)
    write_rows(out / "summary.csv", ["controller", "mean_e_xy", "max_e_xy", "final_e_xy", "mean_e_phi"],
               [[k, m.mean_e_xy, m.max_e_xy, m.final_e_xy, m.mean_e_phi] for k, m in res.metrics.items()])
    return {"metrics": res.metrics, "extra": res.extra}


def cmd_matrix(cfg, out: Path, jobs: int) -> dict:
    if cfg.scenario == "friction_sweep":
        rep = ex.run_friction_sweep(cfg, out)
        write_rows(out / "summary.csv", ["mu", "Tf", "converged", "max_abs_alpha"],
                   [[mu, r["Tf"], r["converged"], r["max_abs_alpha"]] for mu, r in rep.items()])
        return rep
    res = ex.run_planner_matrix(cfg, out_dir=out, jobs=jobs)
    write_rows(out / "summary.csv", ["combo", "e_xy_mean", "e_xy_std", "e_phi_mean", "e_phi_std", "Tf_ratio",
                                     "non_converged"],
               [[c, a["mean_e_xy"]["mean"], a["mean_e_xy"]["std"], a["mean_e_phi"]["mean"], a["mean_e_phi"]["std"],
                 a["Tf_ratio"], a["non_converged"]] for c, a in res.summary.items()])
    return {"summary": res.summary}


def cmd_compare_load(cfg, out: Path, jobs: int) -> dict:
    rep = ex.run_load_comparison(cfg, out)
    write_rows(out / "summary.csv", ["terrain", "divergence", "uniform_s_per_step", "nonuniform_s_per_step"],
               [[k, r["divergence"], r["seconds_per_step"]["uniform"], r["seconds_per_step"]["nonuniform"]]
                for k, r in rep.items()])
    return rep


def cmd_stiffness(cfg, out: Path, jobs: int) -> dict:
    rep = ex.run_stiffness_test(cfg, out)
    write_rows(out / "summary.csv", list(rep), [list(rep.values())])
    return rep


COMMANDS = {"identify": cmd_identify, "track": cmd_track, "plan": cmd_matrix, "matrix": cmd_matrix,
            "compare-load": cmd_compare_load, "stiffness": cmd_stiffness}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tracksim", description="Tracked-vehicle slippage experiments.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON experiment configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for per-target planning")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_(seed=args.seed)
        if cfg.scenario not in COMMAND_SCENARIOS[args.command]:
            raise ConfigError(f"command {args.command!r} cannot run scenario {cfg.scenario!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        payload = COMMANDS[args.command](cfg, out, max(1, args.jobs))
    except NumericalDivergence as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        _write_metrics(out, {"config": cfg.to_json(), "failed": str(exc)})
        return EXIT_DIVERGENCE
    _write_metrics(out, {"config": cfg.to_json(), "result": payload})
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
