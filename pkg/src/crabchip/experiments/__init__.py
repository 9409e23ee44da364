from crabchip.experiments.config import ConfigError, ExperimentConfig
from crabchip.experiments.runner import RunManifest, hold_test, reproduce_figure, run
from crabchip.experiments.targets import builtin_targets, get_target

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunManifest",
    "builtin_targets",
    "get_target",
    "hold_test",
    "reproduce_figure",
    "run",
]
