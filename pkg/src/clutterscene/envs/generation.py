"""Scene generation as a sequential rule-application task."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..grammar import RuleSet, apply_rule, feasible_mask, first_match
from ..perception import hidden_count
from ..physics import (
    Catalog, PlacementFailure, RealizedScene, StabilityReport, check_stability, perturb, realize,
)
from ..scenegraph import SLOT, SceneGraph, is_fully_terminal, serialize
from .common import EnvConfig, RewardConfig, derive_seed

END_RULE = "end"


@dataclass(frozen=True, eq=False)
class Realization:
    """Outcome of simulating a fully terminal graph."""

    scene: RealizedScene | None  # None when no placement exists
    report: StabilityReport | None
    hidden: int

    @property
    def stable(self) -> bool:
        return self.scene is not None and self.report.stable


def simulate(graph: SceneGraph, catalog: Catalog, seed: int, config: EnvConfig = EnvConfig(),
             *, as_support_graph: bool = False) -> Realization:
    """Realize ``graph``, nudge every object once (bottom-up) and judge stability."""
    try:
        scene = realize(graph, catalog, seed, attempts=config.placement_attempts,
                        as_support_graph=as_support_graph)
    except PlacementFailure:
        return Realization(None, None, 0)
    order = sorted(scene.objects, key=lambda i: (scene.objects[i].bottom, i))
    for k, oid in enumerate(order):
        scene = perturb(scene, oid, derive_seed(seed, k + 1), config.delta)
    report = check_stability(scene, config.sigma)
    hidden = hidden_count(scene, config.tau, resolution=config.resolution) if report.stable else 0
    return Realization(scene, report, hidden)


def structure_key(graph: SceneGraph) -> str:
    return serialize(graph.strip_poses())


@dataclass(frozen=True, eq=False)
class GenEnvState:
    graph: SceneGraph
    steps: int
    target_nodes: int
    seed: int
    done: bool = False
    last_realization: Realization | None = None
    last_key: str | None = None  # structure of the last realized graph
    realizations: int = 0


@dataclass(frozen=True)
class GenStepInfo:
    rule: str
    realized: bool
    stable: bool | None
    hidden: int
    closed_slots: int = 0


class GenerationEnv:
    """Builds a scene by applying one production rule per step.

    Each time the graph becomes fully terminal (and differs from the last
    simulated one) it is realized and checked: a stable scene earns
    ``w_u * hidden``, an unstable or unplaceable one earns ``w_s`` and ends
    the episode. Episodes also end once the graph has ``target_nodes``
    nodes (tray excluded), when no rule applies, or at the step limit. Any
    slots still open at that point are closed with the end rule and the
    result is simulated one last time.
    """

    def __init__(self, rules: RuleSet, catalog: Catalog, target_nodes: int,
                 reward: RewardConfig = RewardConfig(), config: EnvConfig = EnvConfig()):
        if target_nodes < 1:
            raise ValueError("target_nodes must be positive")
        self.rules = rules
        self.catalog = catalog
        self.target_nodes = target_nodes
        self.reward = reward
        self.config = config
        self.step_limit = config.gen_step_factor * target_nodes
        self._end = rules.index(END_RULE) if END_RULE in rules.names else None

    def reset(self, seed: int) -> GenEnvState:
        return GenEnvState(self.rules.start, 0, self.target_nodes, int(seed))

    def feasible_mask(self, state: GenEnvState) -> np.ndarray:
        return feasible_mask(state.graph, self.rules)

    def _close_slots(self, graph: SceneGraph) -> tuple[SceneGraph, int]:
        if self._end is None:
            return graph, 0
        rule = self.rules[self._end]
        n = 0
        while graph.count(SLOT):
            graph = apply_rule(graph, rule, first_match(graph, rule))
            n += 1
        return graph, n

    def _realize(self, state: GenEnvState, graph: SceneGraph) -> Realization:
        seed = derive_seed(state.seed, state.steps, state.realizations)
        return simulate(graph, self.catalog, seed, self.config)

    def step(self, state: GenEnvState, rule_index: int) -> tuple[GenEnvState, float, bool, GenStepInfo]:
        if state.done:
            raise RuntimeError("episode already finished; call reset")
        rule = self.rules[rule_index]
        match = first_match(state.graph, rule)
        if match is None:
            raise ValueError(f"rule {rule.name} is not applicable (mask infeasible actions)")
        graph = apply_rule(state.graph, rule, match)
        steps = state.steps + 1
        ending = graph.size() >= self.target_nodes or steps >= self.step_limit
        closed = 0
        if ending:
            graph, closed = self._close_slots(graph)
        reward = 0.0
        done = False
        realized = False
        stable = None
        hidden = 0
        nxt = replace(state, graph=graph, steps=steps)
        key = structure_key(graph) if is_fully_terminal(graph) else None
        if key is not None and key != state.last_key:
            res = self._realize(nxt, graph)
            realized = True
            stable = res.stable
            nxt = replace(nxt, last_realization=res, last_key=key, realizations=state.realizations + 1)
            if res.stable:
                hidden = res.hidden
                reward = self.reward.w_u * hidden
                nxt = replace(nxt, graph=res.scene.graph)
            else:
                reward = self.reward.w_s
                done = True
        if not done:
            done = ending or not feasible_mask(nxt.graph, self.rules).any()
        nxt = replace(nxt, done=done)
        return nxt, float(reward), done, GenStepInfo(rule.name, realized, stable, hidden, closed)
