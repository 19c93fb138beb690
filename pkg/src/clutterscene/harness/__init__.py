from .config import ConfigError, RunConfig, config_from_dict, load_config
from .evaluate import (
    ExpMetrics, GenMetrics, eval_exploration, eval_generation, explorer_factory, make_dataset, report, sg_factory,
)

__all__ = [
    "ConfigError", "ExpMetrics", "GenMetrics", "RunConfig", "config_from_dict", "eval_exploration",
    "eval_generation", "explorer_factory", "load_config", "make_dataset", "report", "sg_factory",
]
