"""Non-learning reference policies."""

from __future__ import annotations

import numpy as np

from ..envs.exploration import ActionMask, ExpEnvState
from ..physics import FLOOR, RealizedScene
from ..physics import geometry


def baseline_rg(mask: np.ndarray, rng: np.random.Generator) -> int:
    """Uniform choice among the feasible rules."""
    idx = np.flatnonzero(mask)
    if not len(idx):
        raise ValueError("no feasible rule")
    return int(rng.choice(idx))


def baseline_re(mask: ActionMask, rng: np.random.Generator) -> tuple[int, int]:
    """Uniform choice among the legal (pick, place) pairs."""
    pairs = mask.pairs()
    if not pairs:
        raise ValueError("no legal action")
    return pairs[int(rng.integers(len(pairs)))]


def free_top_area(scene: RealizedScene, oid: int) -> float:
    """Footprint area of ``oid`` not covered by the objects resting on it."""
    poly = scene.objects[oid].polygon
    covered = sum(geometry.overlap_area(poly, scene.objects[j].polygon) for j in scene.supported_by(oid))
    return max(0.0, geometry.area(poly) - covered)


def baseline_lf(state: ExpEnvState, mask: ActionMask, moved: frozenset[int] = frozenset()
                ) -> tuple[tuple[int, int], frozenset[int]]:
    """Move the largest visible object not moved yet; returns the action and the updated moved-set.

    The object goes to the floor when allowed, otherwise onto the legal
    target with the most free top surface. Once every visible candidate has
    been moved the moved-set starts over.
    """
    scene = state.scene
    rows = [i for i, x in enumerate(mask.pick_ids) if mask.mask[i].any()]
    if not rows:
        raise ValueError("no legal action")
    fresh = [i for i in rows if mask.pick_ids[i] not in moved]
    if not fresh:
        moved = frozenset()
        fresh = rows
    # largest footprint first, lowest id on ties
    row = min(fresh, key=lambda i: (-scene.objects[mask.pick_ids[i]].footprint_area, mask.pick_ids[i]))
    x = mask.pick_ids[row]
    if mask.mask[row, 0]:
        y = FLOOR
    else:
        cols = np.flatnonzero(mask.mask[row])
        y = min((mask.place_ids[j] for j in cols), key=lambda t: (-free_top_area(scene, t), t))
    return (x, y), moved | {x}


class LargestFirst:
    """Stateful wrapper that carries the moved-set across an episode."""

    def __init__(self):
        self.moved: frozenset[int] = frozenset()

    def reset(self) -> None:
        self.moved = frozenset()

    def __call__(self, env, state: ExpEnvState, obs=None) -> tuple[int, int]:
        if state.steps == 0:
            self.reset()
        action, self.moved = baseline_lf(state, env.action_mask(state), self.moved)
        return action
