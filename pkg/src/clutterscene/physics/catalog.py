"""Object catalog: per-class shapes, masses, orientations, meta-groups, tray."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import geometry


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    shape: str  # "cuboid" (dx, dy, dz) or "cylinder" (radius, height)
    dims: tuple[float, ...]
    mass: float
    allowed_orientations: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.shape not in ("cuboid", "cylinder"):
            raise CatalogError(f"{self.name}: unknown shape {self.shape!r}")
        if len(self.dims) != (3 if self.shape == "cuboid" else 2) or min(self.dims) <= 0:
            raise CatalogError(f"{self.name}: bad dimensions {self.dims}")
        if not self.allowed_orientations:
            raise CatalogError(f"{self.name}: no allowed orientations")
        if any(not 0 <= k < len(geometry.ORIENTATIONS) for k in self.allowed_orientations):
            raise CatalogError(f"{self.name}: orientation out of range")

    def resolve_orientation(self, label: int | None) -> int:
        """Map a requested label onto one this object supports.

        ``None`` (an un-oriented support) resolves to the first allowed label;
        unsupported labels fold deterministically onto the allowed list.
        """
        allowed = self.allowed_orientations
        if label is None:
            return allowed[0]
        if label in allowed:
            return label
        return allowed[label % len(allowed)]

    def local_shape(self, label: int) -> tuple[np.ndarray, float]:
        """Footprint polygon centred at the origin and vertical height."""
        return _local_shape(self.shape, self.dims, label)


_SHAPE_CACHE: dict = {}


def _local_shape(shape: str, dims: tuple[float, ...], label: int) -> tuple[np.ndarray, float]:
    key = (shape, dims, label)
    hit = _SHAPE_CACHE.get(key)
    if hit is not None:
        return hit
    rot = geometry.rotation_matrix(label)
    if shape == "cuboid":
        hx, hy, hz = (d / 2 for d in dims)
        corners = np.array([[sx * hx, sy * hy, sz * hz]
                            for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
        world = corners @ rot.T
        poly = geometry.convex_hull(world[:, :2])
        height = float(world[:, 2].max() - world[:, 2].min())
    else:
        radius, h = dims
        axis = rot @ np.array([0.0, 0.0, 1.0])
        if abs(axis[2]) > 0.5:
            poly = geometry.regular_polygon(radius)
            height = h
        else:
            a = axis[:2] / np.linalg.norm(axis[:2])
            perp = np.array([-a[1], a[0]])
            pts = np.array([sa * a * h / 2 + sp * perp * radius for sa in (-1, 1) for sp in (-1, 1)])
            poly = geometry.convex_hull(pts)
            height = 2 * radius
    poly = np.round(poly, 12)
    _SHAPE_CACHE[key] = (poly, height)
    return poly, height


@dataclass(frozen=True)
class MetaSpec:
    """Side-by-side group of member objects that jointly support a stack."""

    name: str
    members: tuple[str, ...]
    spacing: float
    orientation: int = 0


@dataclass(frozen=True)
class Tray:
    width: float
    depth: float
    wall_height: float

    @property
    def half(self) -> tuple[float, float]:
        return self.width / 2, self.depth / 2


@dataclass(frozen=True)
class Catalog:
    objects: tuple[ObjectSpec, ...]
    metas: tuple[MetaSpec, ...]
    tray: Tray
    sigma: float = 0.005
    delta: float = 0.01
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        names = [o.name for o in self.objects]
        if len(set(names)) != len(names):
            raise CatalogError("duplicate object names")
        meta_names = [m.name for m in self.metas]
        if len(set(meta_names)) != len(meta_names):
            raise CatalogError("duplicate meta names")
        for m in self.metas:
            missing = [c for c in m.members if c not in names]
            if missing:
                raise CatalogError(f"meta {m.name} references unknown classes {missing}")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    def spec(self, name: str) -> ObjectSpec:
        return self.objects[self._index[name]]

    def class_id(self, name: str) -> int:
        return self._index[name]

    @property
    def class_index(self) -> dict[str, int]:
        return dict(self._index)

    @property
    def object_names(self) -> list[str]:
        return [o.name for o in self.objects]

    @property
    def meta_names(self) -> list[str]:
        return [m.name for m in self.metas]

    def meta(self, name: str) -> MetaSpec:
        for m in self.metas:
            if m.name == name:
                return m
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "tray": {"width": self.tray.width, "depth": self.tray.depth, "wall_height": self.tray.wall_height},
            "sigma": self.sigma,
            "delta": self.delta,
            "objects": [{"name": o.name, "shape": o.shape, "dims": list(o.dims), "mass": o.mass,
                         "orientations": list(o.allowed_orientations)} for o in self.objects],
            "metas": [{"name": m.name, "members": list(m.members), "spacing": m.spacing,
                       "orientation": m.orientation} for m in self.metas],
        }


def catalog_from_dict(data: dict) -> Catalog:
    try:
        return Catalog(
            objects=tuple(ObjectSpec(o["name"], o["shape"], tuple(float(d) for d in o["dims"]),
                                     float(o["mass"]), tuple(int(k) for k in o["orientations"]))
                          for o in data["objects"]),
            metas=tuple(MetaSpec(m["name"], tuple(m["members"]), float(m["spacing"]), int(m.get("orientation", 0)))
                        for m in data.get("metas", [])),
            tray=Tray(float(data["tray"]["width"]), float(data["tray"]["depth"]), float(data["tray"]["wall_height"])),
            sigma=float(data.get("sigma", 0.005)),
            delta=float(data.get("delta", 0.01)),
        )
    except (KeyError, TypeError) as exc:
        raise CatalogError(f"malformed catalog: {exc}") from exc


def load_catalog(path: str | Path | None = None, *, extended: bool = False) -> Catalog:
    """Load a catalog file; with no path, the shipped 7- or 14-object catalog."""
    if path is None:
        name = "catalog_14.json" if extended else "catalog_7.json"
        text = resources.files("clutterscene.data").joinpath(name).read_text()
    else:
        text = Path(path).read_text()
    try:
        return catalog_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise CatalogError(f"catalog is not valid JSON: {exc}") from exc
