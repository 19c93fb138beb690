"""Realized scenes: placed objects, support relations and graph synchronisation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from ..scenegraph import Edge, OBJECT, SceneGraph, TRAY, orientation
from . import geometry
from .catalog import Tray

FLOOR = 0
Z_TOL = 1e-6


class PlacementFailure(RuntimeError):
    """No collision-free placement exists for some node of the graph."""


@dataclass(frozen=True, eq=False)
class PlacedObject:
    id: int
    name: str
    label: int
    center: np.ndarray  # (3,) geometric centre == centre of mass
    height: float
    mass: float
    local_poly: np.ndarray

    @property
    def polygon(self) -> np.ndarray:
        return self.local_poly + self.center[:2]

    @property
    def bottom(self) -> float:
        return float(self.center[2] - self.height / 2)

    @property
    def top(self) -> float:
        return float(self.center[2] + self.height / 2)

    @property
    def footprint_area(self) -> float:
        return geometry.area(self.local_poly)

    def moved(self, dx: float = 0.0, dy: float = 0.0, dz: float = 0.0) -> "PlacedObject":
        return replace(self, center=self.center + np.array([dx, dy, dz]))

    def at(self, x: float, y: float, bottom: float) -> "PlacedObject":
        return replace(self, center=np.array([x, y, bottom + self.height / 2]))


@dataclass(frozen=True, eq=False)
class RealizedScene:
    graph: SceneGraph
    objects: Mapping[int, PlacedObject]
    support_map: Mapping[int, frozenset[int]]
    tray: Tray
    clamped: frozenset[int] = field(default_factory=frozenset)
    support_form: bool = True  # graph edges mirror support_map

    @property
    def object_ids(self) -> list[int]:
        return sorted(self.objects)

    def floor_objects(self) -> list[int]:
        return [i for i in self.object_ids if self.support_map.get(i) == frozenset({FLOOR})]

    def supported_by(self, oid: int) -> list[int]:
        return [i for i in self.object_ids if oid in self.support_map.get(i, ())]


def tray_polygon(tray: Tray) -> np.ndarray:
    hx, hy = tray.half
    return geometry.rect(0.0, 0.0, hx, hy)


def inside_tray(poly: np.ndarray, tray: Tray, tol: float = 1e-9) -> bool:
    hx, hy = tray.half
    return bool((np.abs(poly[:, 0]) <= hx + tol).all() and (np.abs(poly[:, 1]) <= hy + tol).all())


def collides(a: PlacedObject, b: PlacedObject) -> bool:
    if a.bottom >= b.top - Z_TOL or b.bottom >= a.top - Z_TOL:
        return False
    return geometry.overlap_area(a.polygon, b.polygon) > geometry.EPS_AREA


def compute_supports(objects: Mapping[int, PlacedObject]) -> dict[int, frozenset[int]]:
    out: dict[int, frozenset[int]] = {}
    for oid, o in objects.items():
        if o.bottom <= Z_TOL:
            out[oid] = frozenset({FLOOR})
            continue
        out[oid] = frozenset(
            sid for sid, s in objects.items()
            if sid != oid and abs(s.top - o.bottom) <= Z_TOL
            and geometry.overlap_area(o.polygon, s.polygon) > geometry.EPS_AREA
        )
    return out


def sync_poses(graph: SceneGraph, objects: Mapping[int, PlacedObject], extra: Mapping[int, tuple] = {}) -> SceneGraph:
    """Write object poses back into the graph nodes (marking them simulated)."""
    updates = []
    for oid, o in objects.items():
        n = graph.node(oid)
        updates.append(replace(n, is_simulated=True, position=tuple(float(v) for v in o.center),
                               quat=geometry.orientation_quat(o.label)))
    for nid, pos in extra.items():
        n = graph.node(nid)
        updates.append(replace(n, is_simulated=True, position=tuple(float(v) for v in pos), quat=None))
    return graph.replace_nodes(updates)


def support_graph(graph: SceneGraph, objects: Mapping[int, PlacedObject],
                  support_map: Mapping[int, frozenset[int]]) -> SceneGraph:
    """Tray plus object nodes, with edges mirroring the support relation."""
    root = graph.root
    nodes = [graph.node(root)] + [graph.node(i) for i in sorted(objects)]
    edges = []
    for oid in sorted(objects):
        label = orientation(objects[oid].label)
        for s in sorted(support_map.get(oid, ())):
            edges.append(Edge(root if s == FLOOR else s, oid, label))
        if not support_map.get(oid):
            # An unsupported (falling) object keeps a floor edge so the graph stays connected.
            edges.append(Edge(root, oid, label))
    return SceneGraph(tuple(nodes), tuple(edges), graph.next_id)


def make_scene(graph: SceneGraph, objects: Mapping[int, PlacedObject], tray: Tray,
               clamped: frozenset[int] = frozenset(), *, as_support_graph: bool = True) -> RealizedScene:
    supports = compute_supports(objects)
    g = sync_poses(graph, objects)
    if as_support_graph:
        g = support_graph(g, objects, supports)
    return RealizedScene(g, dict(objects), supports, tray, clamped, as_support_graph)


def is_support_form(graph: SceneGraph) -> bool:
    return all(n.kind.tag in (TRAY, OBJECT) for n in graph.nodes)


def stack_above(scene: RealizedScene, oid: int) -> list[int]:
    """Objects that rest (only) on ``oid`` or on others in its stack."""
    moving = {oid}
    changed = True
    order = sorted(scene.objects, key=lambda i: (scene.objects[i].bottom, i))
    while changed:
        changed = False
        for i in order:
            if i in moving:
                continue
            sup = scene.support_map.get(i, frozenset())
            if sup and sup <= moving:
                moving.add(i)
                changed = True
    moving.discard(oid)
    return sorted(moving)
