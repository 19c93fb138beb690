"""Placement perturbation and pick-and-place transitions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .realize import MAX_ATTEMPTS
from .scene import (
    FLOOR, PlacedObject, RealizedScene, Z_TOL, collides, make_scene, stack_above,
)
from .stability import StabilityReport, check_stability

STOP_FRACTIONS = (1.0, 0.75, 0.5, 0.25, 0.0)


def _wall_limit(polys: list[np.ndarray], shift: np.ndarray, tray) -> float:
    """Largest fraction in [0, 1] of ``shift`` that keeps every polygon inside the tray."""
    hx, hy = tray.half
    pts = np.concatenate(polys)
    t = 1.0
    for axis, half in ((0, hx), (1, hy)):
        d = shift[axis]
        if d > 0:
            room = half - pts[:, axis].max()
        elif d < 0:
            room = pts[:, axis].min() + half
        else:
            continue
        t = min(t, max(0.0, room / abs(d)))
    return t


def perturb(scene: RealizedScene, object_id: int, seed: int, delta: float = 0.01) -> RealizedScene:
    """Nudge an object (with whatever rests solely on it) by ``delta`` metres.

    The direction is a seeded random unit vector in the XY plane. Motion is
    clamped at the tray walls (the object is then listed in
    ``scene.clamped``) and stops early on contact with a neighbour.
    Supports are re-derived afterwards; an object slid off everything ends
    up unsupported and fails the stability check.
    """
    if object_id not in scene.objects:
        raise KeyError(object_id)
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2 * np.pi)
    if delta == 0:
        return scene
    shift = delta * np.array([np.cos(theta), np.sin(theta)])
    moving = [object_id] + stack_above(scene, object_id)
    polys = [scene.objects[i].polygon for i in moving]
    t_wall = _wall_limit(polys, shift, scene.tray)
    clamped = set(scene.clamped)
    if t_wall < 1.0:
        clamped.add(object_id)
    still = [o for i, o in scene.objects.items() if i not in moving]
    chosen = 0.0
    for frac in STOP_FRACTIONS:
        t = frac * t_wall
        cand = [scene.objects[i].moved(shift[0] * t, shift[1] * t) for i in moving]
        if all(not collides(c, o) for c in cand for o in still):
            chosen = t
            break
    objects = dict(scene.objects)
    for i in moving:
        objects[i] = scene.objects[i].moved(shift[0] * chosen, shift[1] * chosen)
    return make_scene(scene.graph, objects, scene.tray, frozenset(clamped), as_support_graph=scene.support_form)


def _settle(objects: dict[int, PlacedObject]) -> dict[int, PlacedObject]:
    """Drop unsupported objects straight down, bottom-up, onto whatever is below."""
    out: dict[int, PlacedObject] = {}
    for oid in sorted(objects, key=lambda i: (objects[i].bottom, i)):
        o = objects[oid]
        rest = 0.0
        for s in out.values():
            if s.top <= o.bottom + Z_TOL and geometry.overlap_area(o.polygon, s.polygon) > geometry.EPS_AREA:
                rest = max(rest, s.top)
        if o.bottom - rest > Z_TOL:
            o = o.moved(dz=rest - o.bottom)
        out[oid] = o
    return out


def _drop_height(obj: PlacedObject, others) -> float:
    rest = 0.0
    for s in others:
        if geometry.overlap_area(obj.polygon, s.polygon) > geometry.EPS_AREA:
            rest = max(rest, s.top)
    return rest


@dataclass(frozen=True)
class TransitionResult:
    scene: RealizedScene
    report: StabilityReport
    rejected: bool = False


def pick_and_place(scene: RealizedScene, x: int, y: int, seed: int, *, delta: float = 0.01,
                   sigma: float = 0.005, attempts: int = MAX_ATTEMPTS) -> TransitionResult:
    """Move object ``x`` onto object ``y`` (or onto the floor when ``y == 0``).

    Objects that were resting on ``x`` fall straight down first. ``x`` is
    then lowered over the centre of ``y`` onto the highest surface below
    it, or put at a random free floor spot. A failed floor search rejects
    the action and leaves the scene untouched.
    """
    if x == y:
        raise ValueError("pick and place targets must differ")
    if x not in scene.objects or (y != FLOOR and y not in scene.objects):
        raise KeyError((x, y))
    rng = np.random.default_rng(seed)
    held = scene.objects[x]
    rest = _settle({i: o for i, o in scene.objects.items() if i != x})
    hx, hy = scene.tray.half
    if y == FLOOR:
        lo, hi = held.local_poly.min(axis=0), held.local_poly.max(axis=0)
        spot = None
        for _ in range(attempts):
            cx = rng.uniform(-hx - lo[0], hx - hi[0])
            cy = rng.uniform(-hy - lo[1], hy - hi[1])
            cand = held.at(cx, cy, 0.0)
            if all(not collides(cand, o) for o in rest.values()):
                spot = cand
                break
        if spot is None:
            return TransitionResult(scene, check_stability(scene, sigma), rejected=True)
        moved = spot
    else:
        target = rest[y]
        lo, hi = held.local_poly.min(axis=0), held.local_poly.max(axis=0)
        cx = float(np.clip(target.center[0], -hx - lo[0], hx - hi[0]))
        cy = float(np.clip(target.center[1], -hy - lo[1], hy - hi[1]))
        probe = held.at(cx, cy, 0.0)
        moved = held.at(cx, cy, _drop_height(probe, rest.values()))
    objects = dict(rest)
    objects[x] = moved
    placed = make_scene(scene.graph, objects, scene.tray)  # support edges change with the move
    placed = perturb(placed, x, int(rng.integers(2**63)), delta)
    return TransitionResult(placed, check_stability(placed, sigma))
