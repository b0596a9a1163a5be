"""Configuration-driven experiment campaigns and the command-line entry point."""

from .config import ExperimentConfig, load_config
from .metrics import Metrics, compute_metrics
from .references import chicane_reference, halton_targets

__all__ = ["ExperimentConfig", "Metrics", "chicane_reference", "compute_metrics", "halton_targets", "load_config"]
