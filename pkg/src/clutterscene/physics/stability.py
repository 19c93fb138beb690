"""Quasi-static support-polygon stability test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .scene import FLOOR, RealizedScene, tray_polygon

UNSUPPORTED_MARGIN = -1.0


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    first_violator: int | None
    margin: float
    margins: dict


def contact_region(scene: RealizedScene, oid: int) -> np.ndarray:
    """Convex hull of the contact patches between ``oid`` and its supports."""
    obj = scene.objects[oid]
    patches = []
    for s in sorted(scene.support_map.get(oid, ())):
        other = tray_polygon(scene.tray) if s == FLOOR else scene.objects[s].polygon
        patch = geometry.clip(obj.polygon, other)
        if geometry.area(patch) > geometry.EPS_AREA:
            patches.append(patch)
    if not patches:
        return np.empty((0, 2))
    return geometry.convex_hull(np.concatenate(patches))


def load_points(scene: RealizedScene) -> dict[int, tuple[float, np.ndarray]]:
    """Total carried mass and its horizontal centre for every object.

    Works top-down. An object resting on a single support hands its whole
    load to that support at its own load centre; a multiply supported object
    splits its load over the contact-patch centroids, weighting nearer
    patches more.
    """
    objs = scene.objects
    order = sorted(objs, key=lambda i: (-objs[i].bottom, -i))
    incoming: dict[int, list[tuple[float, np.ndarray]]] = {i: [] for i in objs}
    result: dict[int, tuple[float, np.ndarray]] = {}
    for oid in order:
        o = objs[oid]
        mass = o.mass
        moment = o.mass * o.center[:2]
        for m, p in incoming[oid]:
            mass += m
            moment = moment + m * p
        com = moment / mass
        result[oid] = (mass, com)
        sups = [s for s in sorted(scene.support_map.get(oid, ())) if s != FLOOR]
        if len(sups) == 1:
            incoming[sups[0]].append((mass, com))
        elif len(sups) > 1:
            cents, weights = [], []
            for s in sups:
                patch = geometry.clip(o.polygon, objs[s].polygon)
                c = geometry.centroid(patch) if len(patch) >= 3 else objs[s].center[:2]
                cents.append(c)
                weights.append(1.0 / (1e-3 + float(np.linalg.norm(c - com))))
            total = sum(weights)
            for s, c, w in zip(sups, cents, weights):
                incoming[s].append((mass * w / total, c))
    return result


def check_stability(scene: RealizedScene, sigma: float = 0.005) -> StabilityReport:
    """Every object's load centre must sit inside its contact hull shrunk by ``sigma``.

    ``margin`` is the signed distance to that shrunk hull, minimised over
    objects; objects are visited bottom-up and the first negative one is
    reported.
    """
    if not scene.objects:
        return StabilityReport(True, None, float("inf"), {})
    loads = load_points(scene)
    margins = {}
    for oid in sorted(scene.objects, key=lambda i: (scene.objects[i].bottom, i)):
        hull = contact_region(scene, oid)
        if len(hull) < 3:
            margins[oid] = UNSUPPORTED_MARGIN
        else:
            margins[oid] = geometry.signed_distance(loads[oid][1], hull) - sigma
    first = next((oid for oid, m in margins.items() if m < 0), None)
    worst = min(margins.values())
    return StabilityReport(first is None, first, worst, margins)
