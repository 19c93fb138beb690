"""Turn a fully terminal scene graph into 3D poses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..scenegraph import END, META, MEMBER, OBJECT, EdgeLabel, SceneGraph, is_fully_terminal
from . import geometry
from .catalog import Catalog
from .scene import (
    PlacedObject, PlacementFailure, RealizedScene, collides, inside_tray, make_scene, sync_poses,
)

MAX_ATTEMPTS = 64


@dataclass(frozen=True)
class _Surface:
    top: float
    poly: np.ndarray | None  # None: the tray floor
    center: np.ndarray


def _label_index(label: EdgeLabel) -> int | None:
    return label.k if label.tag == "Orientation" else None


def realize(graph: SceneGraph, catalog: Catalog, seed: int, *, attempts: int = MAX_ATTEMPTS,
            as_support_graph: bool = False) -> RealizedScene:
    """Place every object of a fully terminal graph.

    Tray children land at seeded random collision-free floor spots; stacked
    children rest on their parent's top surface (first try centred, then
    random offsets inside the parent's footprint). Meta-group members sit
    side by side along x and anything stacked on the group rests across all
    members. ``End`` nodes are transparent. Nodes already simulated first
    retry their previous XY so incremental growth keeps earlier objects put.
    """
    if not is_fully_terminal(graph):
        raise ValueError("graph still contains ObjectSlot nodes")
    rng = np.random.default_rng(seed)
    placed: dict[int, PlacedObject] = {}
    meta_centers: dict[int, tuple] = {}
    visited: set[int] = set()
    tray = catalog.tray
    floor = _Surface(0.0, None, np.zeros(2))

    def fits(group: list[PlacedObject]) -> bool:
        for obj in group:
            if not inside_tray(obj.polygon, tray):
                return False
            for other in placed.values():
                if collides(obj, other):
                    return False
        for i, a in enumerate(group):
            for b in group[i + 1:]:
                if collides(a, b):
                    return False
        return True

    def find_spot(group: list[PlacedObject], surface: _Surface, previous) -> np.ndarray:
        """``group`` members are positioned relative to a (0, 0) group centre."""
        allpts = np.concatenate([g.polygon for g in group])
        lo, hi = allpts.min(axis=0), allpts.max(axis=0)
        hx, hy = tray.half
        for attempt in range(attempts):
            if attempt == 0 and previous is not None:
                xy = np.asarray(previous, dtype=float)
            elif surface.poly is None:
                if hi[0] - lo[0] > 2 * hx or hi[1] - lo[1] > 2 * hy:
                    break
                xy = np.array([rng.uniform(-hx - lo[0], hx - hi[0]), rng.uniform(-hy - lo[1], hy - hi[1])])
            elif attempt == 0:
                # Centred on the support, pulled back inside the walls if needed.
                xy = np.array([np.clip(surface.center[0], -hx - lo[0], hx - hi[0]),
                               np.clip(surface.center[1], -hy - lo[1], hy - hi[1])])
            else:
                plo, phi = surface.poly.min(axis=0), surface.poly.max(axis=0)
                xy = rng.uniform(plo, phi)
                if not geometry.contains(surface.poly, xy):
                    continue
            candidate = [g.moved(xy[0], xy[1], surface.top) for g in group]
            if fits(candidate):
                return xy
        raise PlacementFailure(f"no collision-free spot for nodes {[g.id for g in group]}")

    def make(oid: int, name: str, label: int | None) -> PlacedObject:
        spec = catalog.spec(name)
        lab = spec.resolve_orientation(label)
        poly, height = spec.local_shape(lab)
        return PlacedObject(oid, name, lab, np.array([0.0, 0.0, height / 2]), height, spec.mass, poly)

    def previous_xy(nid: int):
        node = graph.node(nid)
        if node.is_simulated and node.position is not None:
            return node.position[:2]
        return None

    def place(nid: int, label: EdgeLabel, surface: _Surface) -> None:
        if nid in visited:
            return
        visited.add(nid)
        node = graph.node(nid)
        tag = node.kind.tag
        if tag == END:
            for e in graph.children(nid):
                place(e.child, e.label, surface)
            return
        if tag == OBJECT:
            obj = make(nid, node.kind.name, _label_index(label))
            xy = find_spot([obj], surface, previous_xy(nid))
            obj = obj.moved(xy[0], xy[1], surface.top)
            placed[nid] = obj
            own = _Surface(obj.top, obj.polygon, obj.center[:2].copy())
            for e in graph.children(nid):
                place(e.child, e.label, own)
            return
        if tag == META:
            meta = catalog.meta(node.kind.name)
            member_edges = [e for e in graph.children(nid) if e.label == MEMBER]
            members = [make(e.child, graph.node(e.child).kind.name, meta.orientation) for e in member_edges]
            if members:
                widths = [float(m.local_poly[:, 0].max() - m.local_poly[:, 0].min()) for m in members]
                total = sum(widths) + meta.spacing * (len(members) - 1)
                x = -total / 2
                laid = []
                for m, w in zip(members, widths):
                    offset = x + w / 2 - float((m.local_poly[:, 0].max() + m.local_poly[:, 0].min()) / 2)
                    laid.append(m.moved(offset, 0.0, 0.0))
                    x += w + meta.spacing
                xy = find_spot(laid, surface, previous_xy(nid))
                laid = [m.moved(xy[0], xy[1], surface.top) for m in laid]
                for m in laid:
                    placed[m.id] = m
                    visited.add(m.id)
                top = max(m.top for m in laid)
                hull = geometry.convex_hull(np.concatenate([m.polygon for m in laid]))
                group = _Surface(top, hull, np.asarray(xy, dtype=float))
                meta_centers[nid] = (float(xy[0]), float(xy[1]), top)
                for m in laid:
                    own = _Surface(m.top, m.polygon, m.center[:2].copy())
                    for e in graph.children(m.id):
                        place(e.child, e.label, own)
            else:
                group = surface
            for e in graph.children(nid):
                if e.label != MEMBER:
                    place(e.child, e.label, group)
            return
        # Tray nodes never appear below the root; anything else is ignored.

    root = graph.root
    for e in graph.children(root):
        place(e.child, e.label, floor)
    scene = make_scene(graph, placed, tray, as_support_graph=as_support_graph)
    if meta_centers and not as_support_graph:
        scene = RealizedScene(sync_poses(scene.graph, {}, meta_centers), scene.objects, scene.support_map,
                              scene.tray, scene.clamped, scene.support_form)
    return scene
