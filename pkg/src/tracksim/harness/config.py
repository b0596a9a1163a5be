"""Versioned JSON experiment configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

from ..core import ComplianceParams, Pose2D, TerramechParams, VehicleParams
from ..errors import ConfigError

SCHEMA_VERSION = 1
SCENARIOS = ("chicane", "planner_matrix", "halton_stats", "friction_sweep", "slope_chicane", "load_comparison",
             "stiffness_test", "identify")
SIMULATORS = ("flat", "slope_uniform", "slope_nonuniform")
CONTROLLERS = ("UC", "SLC", "both")
PLANNERS = ("DP", "CP", "SLP", "SLP_var", "none", "all")

# scenario -> simulators it can run on
_COMPATIBLE = {
    "chicane": SIMULATORS,
    "planner_matrix": ("flat",),
    "halton_stats": ("flat",),
    "friction_sweep": ("flat",),
    "slope_chicane": ("slope_uniform", "slope_nonuniform"),
    "load_comparison": ("slope_uniform", "slope_nonuniform"),
    "stiffness_test": ("slope_nonuniform",),
    "identify": SIMULATORS,
}


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    simulator: str = "flat"
    controller: str = "both"
    planner: str = "none"
    seed: int = 0
    schema: int = SCHEMA_VERSION
    friction_mu: float = 0.1
    vehicle: dict = field(default_factory=dict)
    terramechanics: dict = field(default_factory=dict)
    compliance: dict = field(default_factory=dict)
    dt_sim: float = 0.001
    dt_ctrl: float = 0.005
    noise_std: float = 0.02
    gains: dict = field(default_factory=lambda: {"k_p": 10.0, "k_phi": 1.0})
    chicane: dict = field(default_factory=dict)
    initial_offset: tuple = (0.05, 0.03, 0.01)
    w_wheel_max: float = 18.0
    v_des: float = 0.4
    v_min: float | None = None
    v_max: float | None = None
    targets: list = field(default_factory=lambda: [[2.0, 2.5, -0.4]])
    n_targets: int = 100
    annulus: tuple = (2.0, 4.0)
    halton_extent: float = 8.0
    frictions: tuple = (0.6, 0.4, 0.1)
    terrain: dict = field(default_factory=dict)
    start: tuple = (0.0, 0.0, 0.0)
    sweep: dict = field(default_factory=dict)
    slopes: tuple = (-0.3, -0.25, -0.2, -0.15, -0.1, -0.05, 0.0)
    slip_models: str | None = None
    cache_dir: str | None = None
    ocp: dict = field(default_factory=dict)
    stiffness: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.schema != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {self.schema} (expected {SCHEMA_VERSION})")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.simulator not in SIMULATORS:
            raise ConfigError(f"unknown simulator {self.simulator!r}")
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"unknown controller {self.controller!r}")
        if self.planner not in PLANNERS:
            raise ConfigError(f"unknown planner {self.planner!r}")
        if self.simulator not in _COMPATIBLE[self.scenario]:
            raise ConfigError(f"scenario {self.scenario!r} cannot run on simulator {self.simulator!r}")
        if self.scenario in ("chicane", "slope_chicane") and self.planner not in ("none",):
            raise ConfigError("tracking scenarios use the chicane reference; planner must be 'none'")
        if len(self.initial_offset) != 3 or len(self.start) != 3:
            raise ConfigError("initial_offset and start must have three entries")
        if self.n_targets <= 0:
            raise ConfigError("n_targets must be positive")
        try:
            self.vehicle_params()
            self.terramech_params()
            self.compliance_params()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def three_d(self) -> bool:
        return self.simulator != "flat"

    @property
    def load_mode(self) -> str:
        return "nonuniform" if self.simulator == "slope_nonuniform" else "uniform"

    def vehicle_params(self) -> VehicleParams:
        return VehicleParams(**self.vehicle)

    def terramech_params(self, mu: float | None = None) -> TerramechParams:
        kw = dict(self.terramechanics)
        kw["friction_mu"] = self.friction_mu if mu is None else mu
        return TerramechParams(**kw)

    def compliance_params(self) -> ComplianceParams:
        return ComplianceParams(**self.compliance)

    def target_poses(self) -> list[Pose2D]:
        return [Pose2D(*map(float, t)) for t in self.targets]

    def with_(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "scenario" not in d:
            raise ConfigError("config needs a 'scenario'")
        kw = {k: tuple(v) if isinstance(v, list) and k in _TUPLE_KEYS else v for k, v in d.items()}
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


_TUPLE_KEYS = ("initial_offset", "annulus", "frictions", "start", "slopes")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(data)
