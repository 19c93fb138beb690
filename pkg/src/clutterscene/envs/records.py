"""Replayable episode traces."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from ..perception import ObservationGraph
from ..scenegraph import serialize
from .common import config_digest, digest_text
from .exploration import ExplorationEnv
from .generation import GenerationEnv

RECORD_VERSION = 1


class RecordError(ValueError):
    pass


@dataclass(frozen=True)
class StepRecord:
    obs_digest: str
    action: tuple[int, ...]
    reward: float
    flags: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EpisodeRecord:
    env: str  # "generation" | "exploration"
    seed: int
    config_digest: str
    params: dict
    steps: tuple[StepRecord, ...]
    final_graph: str

    @property
    def rewards(self) -> list[float]:
        return [s.reward for s in self.steps]

    @property
    def total_reward(self) -> float:
        return sum(self.rewards)


def observation_text(obs: ObservationGraph) -> str:
    rows = [[n.id, str(n.kind), n.position, n.quat] for n in obs.nodes]
    return json.dumps({"nodes": rows, "edges": list(obs.edges)}, separators=(",", ":"))


def env_digest(env) -> str:
    if isinstance(env, GenerationEnv):
        return config_digest(env.reward, env.config, {"rules": env.rules.names, "catalog": env.catalog.to_dict()})
    return config_digest(env.reward, env.config, {"catalog": env.catalog.to_dict(),
                                                  "dataset": digest_text("".join(serialize(g) for g in env.dataset))})


def _env_kind(env) -> str:
    if isinstance(env, GenerationEnv):
        return "generation"
    if isinstance(env, ExplorationEnv):
        return "exploration"
    raise TypeError(f"unsupported environment {type(env).__name__}")


def run_episode(env, policy: Callable, seed: int) -> tuple[EpisodeRecord, object]:
    """Roll out ``policy(env, state, obs) -> action`` and return the trace plus the final state."""
    kind = _env_kind(env)
    steps = []
    if kind == "generation":
        state = env.reset(seed)
        params = {"target_nodes": env.target_nodes}
        while not state.done:
            before = digest_text(serialize(state.graph))
            action = int(policy(env, state, None))
            state, reward, done, info = env.step(state, action)
            flags = {"realized": info.realized, "stable": info.stable, "hidden": info.hidden}
            steps.append(StepRecord(before, (action,), reward, flags))
        final = state.graph
    else:
        state, obs = env.reset(seed)
        params = {"graph_index": state.graph_index, "objects": len(state.scene.objects)}
        while not state.done:
            before = digest_text(observation_text(obs))
            action = tuple(int(a) for a in policy(env, state, obs))
            state, reward, done, obs, info = env.step(state, action)
            flags = {"new": sorted(info.new), "rejected": info.rejected, "stable": info.stable}
            steps.append(StepRecord(before, action, reward, flags))
        params["found"] = len(state.known)
        params["success"] = state.success
        final = state.scene.graph
    return EpisodeRecord(kind, int(seed), env_digest(env), params, tuple(steps), serialize(final)), state


def replay(env, record: EpisodeRecord) -> EpisodeRecord:
    """Re-run the recorded actions; raises if the environment diverges."""
    if _env_kind(env) != record.env:
        raise RecordError(f"record is for a {record.env} environment")
    if env_digest(env) != record.config_digest:
        raise RecordError("environment configuration differs from the recorded one")
    actions = iter([s.action for s in record.steps])

    def scripted(_env, _state, _obs):
        try:
            a = next(actions)
        except StopIteration:
            raise RecordError("episode runs longer than the record") from None
        return a[0] if record.env == "generation" else a

    out, _ = run_episode(env, scripted, record.seed)
    if len(out.steps) != len(record.steps):
        raise RecordError("episode ended before the recorded actions ran out")
    return out


# -- file format ---------------------------------------------------------------

def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def dump_records(records: Iterable[EpisodeRecord]) -> str:
    lines = []
    for r in records:
        lines.append(_dumps({"format": "episode", "version": RECORD_VERSION, "env": r.env, "seed": r.seed,
                             "config_digest": r.config_digest, "params": r.params, "steps": len(r.steps)}))
        for s in r.steps:
            lines.append(_dumps({"obs": s.obs_digest, "action": list(s.action), "reward": s.reward,
                                 "flags": s.flags}))
        lines.append(_dumps({"final_graph": r.final_graph}))
    return "\n".join(lines) + ("\n" if lines else "")


def load_records(text: str) -> list[EpisodeRecord]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    out = []
    pos = 0
    try:
        while pos < len(lines):
            head = json.loads(lines[pos])
            if head.get("format") != "episode" or head.get("version") != RECORD_VERSION:
                raise RecordError(f"line {pos + 1}: not an episode header")
            n = int(head["steps"])
            steps = []
            for k in range(n):
                d = json.loads(lines[pos + 1 + k])
                steps.append(StepRecord(d["obs"], tuple(d["action"]), float(d["reward"]), d["flags"]))
            tail = json.loads(lines[pos + 1 + n])
            out.append(EpisodeRecord(head["env"], int(head["seed"]), head["config_digest"], head["params"],
                                     tuple(steps), tail["final_graph"]))
            pos += n + 2
    except (IndexError, KeyError, json.JSONDecodeError) as exc:
        raise RecordError(f"malformed episode file near line {pos + 1}: {exc}") from exc
    return out


def save_records(records: Iterable[EpisodeRecord], path: str | Path) -> None:
    Path(path).write_text(dump_records(records))


def read_records(path: str | Path) -> list[EpisodeRecord]:
    return load_records(Path(path).read_text())
