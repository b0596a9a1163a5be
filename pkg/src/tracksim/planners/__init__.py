"""Point-to-point planners: Dubins, G1 clothoid and slippage-aware single shooting."""

from .clothoid import Clothoid, fit_g1, plan_clothoid
from .common import PlanRequest, Trajectory, max_curvature, time_series_reference
from .dubins import DubinsPath, dubins_words, plan_dubins, shortest_path
from .ocp import OcpSettings, OcpSolution, plan_ocp

__all__ = ["Clothoid", "DubinsPath", "OcpSettings", "OcpSolution", "PlanRequest", "Trajectory", "dubins_words",
           "fit_g1", "max_curvature", "plan_clothoid", "plan_dubins", "plan_ocp", "shortest_path",
           "time_series_reference"]
