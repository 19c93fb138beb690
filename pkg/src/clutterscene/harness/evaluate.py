"""Evaluation loops and dataset generation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .. import __version__
from ..agents.baselines import LargestFirst, baseline_re, baseline_rg
from ..agents.explore import ExplorePolicy
from ..agents.softq import GenerationAgent
from ..envs import EpisodeRecord, ExplorationEnv, GenerationEnv, derive_seed, env_digest, run_episode
from ..scenegraph import SceneGraph

# Per-episode seed for episode k of a run with master seed s: derive_seed(s, EPISODE_STREAM, k)
EPISODE_STREAM = 7
POLICY_STREAM = 8

PolicyFactory = Callable[[int], Callable]  # episode seed -> policy(env, state, obs)


@dataclass(frozen=True)
class GenMetrics:
    mean_hidden: float
    stability_rate: float
    scenes: int
    stable_scenes: int


@dataclass(frozen=True)
class ExpMetrics:
    success_rate: float
    objects_found: float
    episodes: int
    mean_objects: float


def episode_seed(seed: int, k: int) -> int:
    return derive_seed(seed, EPISODE_STREAM, k)


def rg_factory(ep_seed: int):
    rng = np.random.default_rng(derive_seed(ep_seed, POLICY_STREAM))
    return lambda env, state, obs: baseline_rg(env.feasible_mask(state), rng)


def re_factory(ep_seed: int):
    rng = np.random.default_rng(derive_seed(ep_seed, POLICY_STREAM))
    return lambda env, state, obs: baseline_re(env.action_mask(state), rng)


def lf_factory(ep_seed: int):
    return LargestFirst()


def sg_factory(model, env: GenerationEnv, alpha: float, greedy: bool = True) -> PolicyFactory:
    return lambda ep_seed: GenerationAgent(model, env, alpha, greedy=greedy,
                                           seed=derive_seed(ep_seed, POLICY_STREAM))


def explorer_factory(model, view: str, greedy: bool = True) -> PolicyFactory:
    return lambda ep_seed: ExplorePolicy(model, view, greedy=greedy, seed=derive_seed(ep_seed, POLICY_STREAM))


def generation_metrics(records: Sequence[EpisodeRecord], finals: Sequence) -> GenMetrics:
    """Stability over the final realization of every episode; hidden count over the stable ones."""
    stable = [r for r in finals if r is not None and r.stable]
    n = len(finals)
    return GenMetrics(
        mean_hidden=float(np.mean([r.hidden for r in stable])) if stable else 0.0,
        stability_rate=len(stable) / n if n else 0.0,
        scenes=n,
        stable_scenes=len(stable),
    )


def eval_generation(env: GenerationEnv, factory: PolicyFactory, episodes: int, seed: int
                    ) -> tuple[GenMetrics, list[EpisodeRecord]]:
    records, finals = [], []
    for k in range(episodes):
        s = episode_seed(seed, k)
        rec, state = run_episode(env, factory(s), s)
        records.append(rec)
        finals.append(state.last_realization)
    return generation_metrics(records, finals), records


def metrics_from_generation_records(records: Sequence[EpisodeRecord]) -> GenMetrics:
    """Recompute generation metrics from traces alone (the last realization event of each)."""
    stable, hidden = 0, []
    for rec in records:
        events = [s.flags for s in rec.steps if s.flags.get("realized")]
        last = events[-1] if events else None
        if last is not None and last["stable"]:
            stable += 1
            hidden.append(last["hidden"])
    n = len(records)
    return GenMetrics(float(np.mean(hidden)) if hidden else 0.0, stable / n if n else 0.0, n, stable)


def eval_exploration(env: ExplorationEnv, factory: PolicyFactory, episodes: int, seed: int
                     ) -> tuple[ExpMetrics, list[EpisodeRecord]]:
    records = []
    for k in range(episodes):
        s = episode_seed(seed, k)
        rec, _ = run_episode(env, factory(s), s)
        records.append(rec)
    return metrics_from_exploration_records(records), records


def metrics_from_exploration_records(records: Sequence[EpisodeRecord]) -> ExpMetrics:
    n = len(records)
    if not n:
        return ExpMetrics(0.0, 0.0, 0, 0.0)
    return ExpMetrics(
        success_rate=float(np.mean([r.params["success"] for r in records])),
        objects_found=float(np.mean([r.params["found"] for r in records])),
        episodes=n,
        mean_objects=float(np.mean([r.params["objects"] for r in records])),
    )


def make_dataset(env: GenerationEnv, factory: PolicyFactory, count: int, seed: int, *, min_hidden: int = 0,
                 max_episodes: int | None = None) -> tuple[list[SceneGraph], dict]:
    """Final graphs of episodes that ended in a stable scene hiding at least ``min_hidden`` objects."""
    graphs = []
    k = 0
    limit = max_episodes if max_episodes is not None else 200 * max(count, 1)
    while len(graphs) < count and k < limit:
        s = episode_seed(seed, k)
        _, state = run_episode(env, factory(s), s)
        k += 1
        res = state.last_realization
        if res is not None and res.stable and res.hidden >= min_hidden:
            graphs.append(state.graph.strip_poses())
    return graphs, {"episodes": k, "kept": len(graphs), "min_hidden": min_hidden}


def report(kind: str, metrics, *, seed: int, env, config: dict, extra: dict | None = None) -> str:
    """Canonical JSON report; equal (config, seed, code version) give identical bytes."""
    body = {
        "kind": kind,
        "metrics": asdict(metrics),
        "seed": seed,
        "config_digest": env_digest(env),
        "run_config": config,
        "code_version": __version__,
    }
    if extra:
        body["extra"] = extra
    return json.dumps(body, sort_keys=True, indent=2) + "\n"
