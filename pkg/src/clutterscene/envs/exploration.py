"""Interactive search: rearrange objects until every one has been seen."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from ..perception import ObservationGraph, build_observation, detect
from ..physics import (
    FLOOR, Catalog, PlacementFailure, RealizedScene, check_stability, pick_and_place, realize,
)
from ..scenegraph import Node, SceneGraph
from .common import EnvConfig, RewardConfig, derive_seed


@dataclass(frozen=True, eq=False)
class ExpEnvState:
    scene: RealizedScene
    known: frozenset[int]
    visible: frozenset[int]
    steps: int
    seed: int
    step_limit: int
    last_seen: Mapping[int, Node]
    graph_index: int = -1
    done: bool = False
    unstable: bool = False

    @property
    def objects(self) -> frozenset[int]:
        return frozenset(self.scene.objects)

    @property
    def success(self) -> bool:
        return self.known == self.objects


@dataclass(frozen=True, eq=False)
class ActionMask:
    """Legal (pick, place) pairs; ``place_ids[0]`` is the tray floor."""

    pick_ids: tuple[int, ...]
    place_ids: tuple[int, ...]
    mask: np.ndarray  # bool, (len(pick_ids), len(place_ids))

    def pairs(self) -> list[tuple[int, int]]:
        return [(self.pick_ids[i], self.place_ids[j]) for i, j in zip(*np.nonzero(self.mask))]

    def allows(self, x: int, y: int) -> bool:
        if x not in self.pick_ids or y not in self.place_ids:
            return False
        return bool(self.mask[self.pick_ids.index(x), self.place_ids.index(y)])

    def any(self) -> bool:
        return bool(self.mask.any())


def footprint_extent(scene: RealizedScene, oid: int) -> tuple[float, float]:
    """(min side, max side) of an object's axis-aligned footprint box."""
    poly = scene.objects[oid].local_poly
    ext = poly.max(axis=0) - poly.min(axis=0)
    return float(ext.min()), float(ext.max())


def fits_on(scene: RealizedScene, x: int, y: int) -> bool:
    """``x`` can only go on ``y`` if its narrow side is no longer than ``y``'s long side."""
    return footprint_extent(scene, x)[0] <= footprint_extent(scene, y)[1] + 1e-9


def action_mask(scene: RealizedScene, visible: Sequence[int], capacity: int) -> ActionMask:
    picks = tuple(sorted(visible))
    places = (FLOOR,) + picks
    mask = np.zeros((len(picks), len(places)), dtype=bool)
    floor_ok = len(scene.floor_objects()) < capacity
    for i, x in enumerate(picks):
        mask[i, 0] = floor_ok
        for j, y in enumerate(picks, start=1):
            mask[i, j] = x != y and fits_on(scene, x, y)
    return ActionMask(picks, places, mask)


@dataclass(frozen=True)
class ExpStepInfo:
    action: tuple[int, int]
    new: frozenset[int]
    rejected: bool
    stable: bool


class ExplorationEnv:
    """Pick-and-place search over scenes drawn from a graph dataset.

    Reward is ``r_d`` per newly detected object, plus ``w_s`` (and the end
    of the episode) when a move leaves the scene unstable. Success means
    every object has been seen at least once.
    """

    def __init__(self, dataset: Sequence[SceneGraph], catalog: Catalog,
                 reward: RewardConfig = RewardConfig(), config: EnvConfig = EnvConfig()):
        if not dataset:
            raise ValueError("dataset is empty")
        self.dataset = list(dataset)
        self.catalog = catalog
        self.reward = reward
        self.config = config

    def _detect(self, scene: RealizedScene) -> frozenset[int]:
        return detect(scene, self.config.tau, resolution=self.config.resolution).visible

    def initial_scene(self, seed: int) -> tuple[int, RealizedScene]:
        """Draw a graph and realize it at fresh floor positions (retrying failures)."""
        rng = np.random.default_rng(derive_seed(seed, 0))
        for attempt in range(self.config.reset_retries):
            idx = int(rng.integers(len(self.dataset)))
            graph = self.dataset[idx].strip_poses()
            try:
                scene = realize(graph, self.catalog, derive_seed(seed, 1, attempt),
                                attempts=self.config.placement_attempts, as_support_graph=True)
            except PlacementFailure:
                continue
            if check_stability(scene, self.config.sigma).stable:
                return idx, scene
        raise PlacementFailure(f"no stable realization after {self.config.reset_retries} draws")

    def reset(self, seed: int) -> tuple[ExpEnvState, ObservationGraph]:
        idx, scene = self.initial_scene(seed)
        visible = self._detect(scene)
        last_seen = {i: scene.graph.node(i) for i in visible}
        state = ExpEnvState(scene, visible, visible, 0, int(seed),
                            self.config.exp_step_factor * len(scene.objects), last_seen, idx)
        state = replace(state, done=state.success or not self.action_mask(state).any())
        return state, self.observe(state)

    def observe(self, state: ExpEnvState) -> ObservationGraph:
        return build_observation(state.scene, state.known, state.last_seen, state.visible)

    def privileged_graph(self, state: ExpEnvState) -> SceneGraph:
        """Full support graph with ``is_seen`` marking the objects already found."""
        g = state.scene.graph
        return g.replace_nodes([replace(g.node(i), is_seen=i in state.known) for i in g.object_ids()])

    def action_mask(self, state: ExpEnvState) -> ActionMask:
        return action_mask(state.scene, state.visible, self.config.capacity)

    def step(self, state: ExpEnvState, action: tuple[int, int]):
        if state.done:
            raise RuntimeError("episode already finished; call reset")
        x, y = int(action[0]), int(action[1])
        if not self.action_mask(state).allows(x, y):
            raise ValueError(f"action {(x, y)} is masked")
        steps = state.steps + 1
        result = pick_and_place(state.scene, x, y, derive_seed(state.seed, steps), delta=self.config.delta,
                                sigma=self.config.sigma, attempts=self.config.placement_attempts)
        if result.rejected:
            nxt = replace(state, steps=steps)
            done = steps >= state.step_limit
            nxt = replace(nxt, done=done)
            return nxt, 0.0, done, self.observe(nxt), ExpStepInfo((x, y), frozenset(), True, True)
        scene = result.scene
        visible = self._detect(scene)
        new = visible - state.known
        last_seen = dict(state.last_seen)
        last_seen.update({i: scene.graph.node(i) for i in visible})
        reward = self.reward.r_d * len(new)
        unstable = not result.report.stable
        if unstable:
            reward += self.reward.w_s
        nxt = replace(state, scene=scene, known=state.known | visible, visible=visible, steps=steps,
                      last_seen=last_seen, unstable=unstable)
        done = unstable or nxt.success or steps >= state.step_limit or not self.action_mask(nxt).any()
        nxt = replace(nxt, done=done)
        return nxt, float(reward), done, self.observe(nxt), ExpStepInfo((x, y), frozenset(new), False,
                                                                       not unstable)
