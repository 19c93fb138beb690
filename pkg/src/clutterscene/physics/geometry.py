"""Planar convex-polygon helpers and the global orientation table.

Polygons are ``(k, 2)`` float arrays with counter-clockwise vertices.
"""

from __future__ import annotations

import math

import numpy as np

CIRCLE_SIDES = 16
EPS_AREA = 1e-9

# label -> (body axis pointing up, yaw in degrees)
ORIENTATIONS: tuple[tuple[str, float], ...] = (
    ("z", 0.0),
    ("z", 90.0),
    ("y", 0.0),
    ("y", 90.0),
    ("x", 0.0),
    ("x", 90.0),
    ("z", 45.0),
    ("z", 135.0),
    ("y", 45.0),
    ("x", 45.0),
)


def _quat_mul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return (
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    )


def _axis_quat(axis, angle):
    s = math.sin(angle / 2)
    return (math.cos(angle / 2), axis[0] * s, axis[1] * s, axis[2] * s)


def orientation_quat(label: int) -> tuple[float, float, float, float]:
    """Unit quaternion ``(w, x, y, z)`` for a global orientation label."""
    up, yaw = ORIENTATIONS[label]
    if up == "z":
        tilt = (1.0, 0.0, 0.0, 0.0)
    elif up == "y":
        tilt = _axis_quat((1.0, 0.0, 0.0), math.pi / 2)
    else:
        tilt = _axis_quat((0.0, 1.0, 0.0), -math.pi / 2)
    q = _quat_mul(_axis_quat((0.0, 0.0, 1.0), math.radians(yaw)), tilt)
    norm = math.sqrt(sum(c * c for c in q))
    return tuple(c / norm for c in q)


def rotation_matrix(label: int) -> np.ndarray:
    w, x, y, z = orientation_quat(label)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def regular_polygon(radius: float, sides: int = CIRCLE_SIDES) -> np.ndarray:
    t = 2 * np.pi * np.arange(sides) / sides
    return np.stack([radius * np.cos(t), radius * np.sin(t)], axis=1)


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns CCW hull without repeated endpoint."""
    pts = np.unique(np.round(np.asarray(points, dtype=float), 12), axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 1e-15:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 1e-15:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def centroid(poly: np.ndarray) -> np.ndarray:
    a = area(poly)
    if abs(a) < 1e-15:
        return poly.mean(axis=0)
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    c = x * yn - xn * y
    return np.array([np.sum((x + xn) * c), np.sum((y + yn) * c)]) / (6 * a)


def clip(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Intersection of two convex CCW polygons (Sutherland-Hodgman)."""
    out = np.asarray(subject, dtype=float)
    n = len(clipper)
    for i in range(n):
        if len(out) == 0:
            break
        a, b = clipper[i], clipper[(i + 1) % n]
        edge = b - a
        side = edge[0] * (out[:, 1] - a[1]) - edge[1] * (out[:, 0] - a[0])
        inside = side >= -1e-12
        if inside.all():
            continue
        if not inside.any():
            return np.empty((0, 2))
        pts = []
        m = len(out)
        for j in range(m):
            p, q = out[j], out[(j + 1) % m]
            sp, sq = side[j], side[(j + 1) % m]
            if inside[j]:
                pts.append(p)
            if inside[j] != inside[(j + 1) % m]:
                t = sp / (sp - sq)
                pts.append(p + t * (q - p))
        out = np.array(pts) if pts else np.empty((0, 2))
    return out


def overlap_area(a: np.ndarray, b: np.ndarray) -> float:
    amin, amax = a.min(axis=0), a.max(axis=0)
    bmin, bmax = b.min(axis=0), b.max(axis=0)
    if (amin >= bmax - 1e-12).any() or (bmin >= amax - 1e-12).any():
        return 0.0
    return area(clip(a, b))


def signed_distance(point: np.ndarray, poly: np.ndarray) -> float:
    """Distance from ``point`` to the boundary of a convex polygon.

    Positive inside, negative outside (outside distances are the largest
    violated half-plane distance, a lower bound on the true distance).
    """
    if len(poly) < 3:
        return -math.inf
    a = poly
    b = np.roll(poly, -1, axis=0)
    edge = b - a
    length = np.hypot(edge[:, 0], edge[:, 1])
    keep = length > 1e-15
    d = (edge[keep, 0] * (point[1] - a[keep, 1]) - edge[keep, 1] * (point[0] - a[keep, 0])) / length[keep]
    return float(d.min())


def contains(poly: np.ndarray, point: np.ndarray, tol: float = 1e-12) -> bool:
    return signed_distance(point, poly) >= -tol


def rect(cx: float, cy: float, hx: float, hy: float) -> np.ndarray:
    return np.array([[cx - hx, cy - hy], [cx + hx, cy - hy], [cx + hx, cy + hy], [cx - hx, cy + hy]])
