from .baselines import LargestFirst, baseline_lf, baseline_re, baseline_rg, free_top_area
from .explore import (
    PRIVILEGED, STUDENT, A2CConfig, BCConfig, BCSample, ExplorePolicy, agreement, collect_bc_dataset, distill,
    exploration_model, featurize, train_a2c,
)
from .softq import GenerationAgent, ReplayBuffer, SoftQConfig, generation_model, soft_value, softq_policy, train_softq

__all__ = [
    "A2CConfig", "BCConfig", "BCSample", "ExplorePolicy", "GenerationAgent", "LargestFirst", "PRIVILEGED",
    "ReplayBuffer", "STUDENT", "SoftQConfig", "agreement", "baseline_lf", "baseline_re", "baseline_rg",
    "collect_bc_dataset", "distill", "exploration_model", "featurize", "free_top_area", "generation_model",
    "soft_value", "softq_policy", "train_a2c", "train_softq",
]
