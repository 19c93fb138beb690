"""Top-down visibility model standing in for an object detector."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .physics.scene import RealizedScene
from .scenegraph import Node

DEFAULT_RESOLUTION = 0.002
DEFAULT_TAU = 0.1
EMPTY = 0


@dataclass(frozen=True, eq=False)
class RasterMap:
    """Grid of topmost object ids (``EMPTY`` where only the tray floor shows).

    Row ``i`` / column ``j`` covers the cell centred at
    ``(-hx + (j + .5) * res, -hy + (i + .5) * res)``.
    """

    resolution: float
    cells: np.ndarray
    footprint_cells: Mapping[int, int]

    def owned(self) -> dict[int, int]:
        ids, counts = np.unique(self.cells[self.cells != EMPTY], return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}


def _cell_centres(width: float, depth: float, resolution: float) -> tuple[np.ndarray, np.ndarray]:
    nx = max(1, int(round(width / resolution)))
    ny = max(1, int(round(depth / resolution)))
    xs = -width / 2 + (np.arange(nx) + 0.5) * resolution
    ys = -depth / 2 + (np.arange(ny) + 0.5) * resolution
    return np.meshgrid(xs, ys)


def _inside_convex(poly: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Vectorised point-in-convex-polygon test (counter-clockwise vertices)."""
    inside = np.ones(px.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        inside &= (bx - ax) * (py - ay) - (by - ay) * (px - ax) >= -1e-12
    return inside


def render_topdown(scene: RealizedScene, resolution: float = DEFAULT_RESOLUTION) -> RasterMap:
    """Orthographic z-buffer: each cell keeps the object with the highest top."""
    gx, gy = _cell_centres(scene.tray.width, scene.tray.depth, resolution)
    cells = np.full(gx.shape, EMPTY, dtype=np.int64)
    height = np.full(gx.shape, -np.inf)
    footprint = {}
    for oid in sorted(scene.objects):
        obj = scene.objects[oid]
        poly = obj.polygon
        lo, hi = poly.min(axis=0), poly.max(axis=0)
        # restrict the test to the bounding box of the footprint
        cols = np.nonzero((gx[0] >= lo[0] - resolution) & (gx[0] <= hi[0] + resolution))[0]
        rows = np.nonzero((gy[:, 0] >= lo[1] - resolution) & (gy[:, 0] <= hi[1] + resolution))[0]
        if not len(cols) or not len(rows):
            footprint[oid] = 0
            continue
        sub = np.ix_(rows, cols)
        mask = _inside_convex(poly, gx[sub], gy[sub])
        footprint[oid] = int(mask.sum())
        top = obj.top
        win = mask & (top > height[sub])
        cells[sub] = np.where(win, oid, cells[sub])
        height[sub] = np.where(win, top, height[sub])
    return RasterMap(resolution, cells, footprint)


@dataclass(frozen=True)
class DetectionResult:
    visible: frozenset[int]
    visible_fraction: Mapping[int, float]


def detect(scene: RealizedScene, tau: float = DEFAULT_TAU, *, resolution: float = DEFAULT_RESOLUTION,
           raster: RasterMap | None = None) -> DetectionResult:
    """An object is detected when at least ``tau`` of its footprint is topmost."""
    raster = raster or render_topdown(scene, resolution)
    owned = raster.owned()
    fractions = {}
    for oid in sorted(scene.objects):
        total = raster.footprint_cells.get(oid, 0)
        fractions[oid] = owned.get(oid, 0) / total if total else 0.0
    visible = frozenset(i for i, f in fractions.items() if f >= tau)
    return DetectionResult(visible, fractions)


def hidden_count(scene: RealizedScene, tau: float = DEFAULT_TAU, *,
                 resolution: float = DEFAULT_RESOLUTION) -> int:
    return len(scene.objects) - len(detect(scene, tau, resolution=resolution).visible)


@dataclass(frozen=True)
class ObservationGraph:
    """Fully connected graph over the objects seen so far."""

    nodes: tuple[Node, ...]
    edges: tuple[tuple[int, int], ...] = field(default=())

    @property
    def ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    def node(self, node_id: int) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)


def fully_connected(ids: Iterable[int]) -> tuple[tuple[int, int], ...]:
    ids = sorted(ids)
    return tuple((a, b) for a in ids for b in ids if a != b)


def build_observation(scene: RealizedScene, known: Iterable[int],
                      last_seen: Mapping[int, Node] | None = None,
                      visible: Iterable[int] | None = None) -> ObservationGraph:
    """Partial scene graph over ``known`` objects.

    Currently visible members take their pose from ``scene``; the others
    keep the node recorded in ``last_seen`` (their pose when last visible).
    ``visible`` defaults to all of ``known``.
    """
    known = sorted(set(known))
    visible = set(known) if visible is None else set(visible)
    last_seen = last_seen or {}
    nodes = []
    for oid in known:
        if oid in visible or oid not in last_seen:
            n = scene.graph.node(oid)
        else:
            n = last_seen[oid]
        nodes.append(replace(n, is_seen=True))
    return ObservationGraph(tuple(nodes), fully_connected(known))


# -- image dumps ---------------------------------------------------------------

def palette(n: int) -> np.ndarray:
    """Fixed colour per index; index 0 is the tray floor."""
    rng = np.random.default_rng(12345)
    colors = rng.integers(40, 256, size=(max(n, 1), 3), dtype=np.uint8)
    colors[0] = (200, 200, 200)
    return colors


def raster_image(raster: RasterMap, class_of: Mapping[int, int], n_classes: int) -> np.ndarray:
    """RGB image (north up) colouring each cell by the owning object's class."""
    colors = palette(n_classes + 1)
    lut = np.zeros(int(raster.cells.max()) + 1, dtype=np.int64)
    for oid, cls in class_of.items():
        if oid < len(lut):
            lut[oid] = cls + 1
    img = colors[lut[raster.cells]]
    return img[::-1]


def save_image(img: np.ndarray, path: str | Path) -> None:
    """Write PNG (or PPM when the suffix is ``.ppm``)."""
    from PIL import Image

    path = Path(path)
    fmt = "PPM" if path.suffix.lower() == ".ppm" else "PNG"
    Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8), "RGB").save(path, format=fmt)
