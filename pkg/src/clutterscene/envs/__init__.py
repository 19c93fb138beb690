from .common import (
    EnvConfig, RewardConfig, config_digest, config_from_dict, derive_seed, digest_text, discounted_return,
)
from .exploration import ActionMask, ExpEnvState, ExplorationEnv, ExpStepInfo, action_mask, fits_on
from .generation import GenEnvState, GenerationEnv, GenStepInfo, Realization, simulate
from .records import (
    EpisodeRecord, RecordError, StepRecord, dump_records, env_digest, load_records, read_records, replay, run_episode,
    save_records,
)

__all__ = [
    "ActionMask", "EnvConfig", "EpisodeRecord", "ExpEnvState", "ExpStepInfo", "ExplorationEnv", "GenEnvState",
    "GenStepInfo", "GenerationEnv", "Realization", "RecordError", "RewardConfig", "StepRecord", "action_mask",
    "config_digest", "config_from_dict", "derive_seed", "digest_text", "discounted_return", "dump_records", "env_digest",
    "fits_on", "load_records", "read_records", "replay", "run_episode", "save_records", "simulate",
]
