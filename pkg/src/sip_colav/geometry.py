"""Planar poses and padded convex polygons.

The robot footprint is a convex polygon inflated by a disk of radius
``pad_radius``: every point within ``pad_radius`` of the polygon belongs to
the footprint.  Collision constraints therefore compare point-to-polygon
distances against ``pad_radius``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePolygon, NonConvexPolygon

_AREA_TOL = 1e-12


def rot2(theta: float) -> np.ndarray:
    """Rotation matrix [[c, -s], [s, c]] for a heading angle."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass
class Pose2:
    """Planar pose: position of the footprint frame and heading angle."""

    position: np.ndarray
    heading: float

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(2)
        self.heading = float(self.heading)

    @classmethod
    def from_state(cls, x) -> "Pose2":
        """Pose from a state vector laid out as (px, py, theta, ...)."""
        x = np.asarray(x, dtype=float)
        return cls(x[:2], x[2])

    def rotation(self) -> np.ndarray:
        return rot2(self.heading)

    def to_world(self, body_points: np.ndarray) -> np.ndarray:
        """Map body-frame points (..., 2) into the world frame."""
        body_points = np.asarray(body_points, dtype=float)
        return body_points @ self.rotation().T + self.position

    def to_body(self, world_points: np.ndarray) -> np.ndarray:
        world_points = np.asarray(world_points, dtype=float)
        return (world_points - self.position) @ self.rotation()


def halfplanes_from_vertices(vertices) -> tuple[np.ndarray, np.ndarray]:
    """Outward unit-normal half-plane form {g : A g + b <= 0} of a convex
    polygon given counter-clockwise vertices.

    Raises NonConvexPolygon for reflex corners, DegeneratePolygon for fewer
    than 3 vertices, collinear consecutive edges, or near-zero area.
    """
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
        raise DegeneratePolygon("need at least 3 planar vertices")
    n = v.shape[0]
    # signed area, positive for counter-clockwise ordering
    x, y = v[:, 0], v[:, 1]
    area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    if abs(area) < _AREA_TOL:
        raise DegeneratePolygon("polygon area is numerically zero")
    if area < 0:
        raise NonConvexPolygon("vertices must be ordered counter-clockwise")
    edges = np.roll(v, -1, axis=0) - v
    cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
    if np.any(np.abs(cross) < _AREA_TOL * max(1.0, np.abs(v).max()) ** 2):
        raise DegeneratePolygon("consecutive edges are collinear")
    if np.any(cross < 0):
        raise NonConvexPolygon("vertex list has a reflex corner")
    lengths = np.linalg.norm(edges, axis=1)
    if np.any(lengths < 1e-12):
        raise DegeneratePolygon("repeated vertex")
    # outward normal of a CCW edge (dx, dy) is (dy, -dx) / |edge|
    normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1) / lengths[:, None]
    offsets = -np.einsum("ij,ij->i", normals, v)
    return normals, offsets


@dataclass
class PaddedPolygon:
    """Convex polygon with disk padding.

    A: (n_h, 2) unit outward normals, b: (n_h,) offsets with A g + b <= 0 on
    the polygon; vertices: (n_v, 2) counter-clockwise; pad_radius >= 0.
    """

    vertices: np.ndarray
    pad_radius: float
    A: np.ndarray = field(init=False)
    b: np.ndarray = field(init=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.pad_radius = float(self.pad_radius)
        if self.pad_radius < 0:
            raise ValueError("pad_radius must be nonnegative")
        self.A, self.b = halfplanes_from_vertices(self.vertices)
        self._boundary_cache: dict[float, np.ndarray] = {}

    @property
    def n_halfplanes(self) -> int:
        return self.A.shape[0]

    def max_vertex_norm(self) -> float:
        """Largest distance from the frame origin to a polygon vertex."""
        return float(np.max(np.linalg.norm(self.vertices, axis=1)))

    def contains(self, q, tol: float = 0.0) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(self.A @ q + self.b <= tol))

    def boundary_points(self, spacing: float) -> np.ndarray:
        """Cached boundary_grid result for repeated subset updates."""
        key = float(spacing)
        if key not in self._boundary_cache:
            self._boundary_cache[key] = boundary_grid(self, spacing)
        return self._boundary_cache[key]


def project_point_onto_polygon(poly: PaddedPolygon, q) -> tuple[np.ndarray, float]:
    """Closest point of the (unpadded) polygon to q and its distance.

    Interior points project onto themselves with distance 0.  Ties between
    edge candidates resolve to the lowest edge index.
    """
    q = np.asarray(q, dtype=float).reshape(2)
    if poly.contains(q):
        return q.copy(), 0.0
    v = poly.vertices
    w = np.roll(v, -1, axis=0)
    e = w - v
    # clamped parametric projection onto each edge segment
    t = np.einsum("ij,ij->i", q - v, e) / np.einsum("ij,ij->i", e, e)
    t = np.clip(t, 0.0, 1.0)
    cand = v + t[:, None] * e
    d = np.linalg.norm(cand - q, axis=1)
    i = int(np.argmin(d))  # argmin returns the first (lowest) index on ties
    return cand[i], float(d[i])


def project_points_onto_polygon(poly: PaddedPolygon, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection of many body-frame points (m, 2).

    Returns (closest points (m, 2), distances (m,)); interior points get
    distance 0 and project onto themselves.
    """
    q = np.asarray(q, dtype=float).reshape(-1, 2)
    v = poly.vertices
    w = np.roll(v, -1, axis=0)
    e = w - v
    ee = np.einsum("ij,ij->i", e, e)
    # (m, n_edges) clamped projections
    t = np.einsum("mj,ij->mi", q, e) - np.einsum("ij,ij->i", v, e)
    t = np.clip(t / ee, 0.0, 1.0)
    cand = v[None, :, :] + t[:, :, None] * e[None, :, :]
    d = np.linalg.norm(cand - q[:, None, :], axis=2)
    i = np.argmin(d, axis=1)
    rows = np.arange(q.shape[0])
    best = cand[rows, i]
    dist = d[rows, i]
    inside = np.all(q @ poly.A.T + poly.b <= 0.0, axis=1)
    best[inside] = q[inside]
    dist[inside] = 0.0
    return best, dist


def project_point_onto_boundary(poly: PaddedPolygon, q) -> tuple[np.ndarray, float]:
    """Closest point of the polygon BOUNDARY to q (even for interior q)."""
    q = np.asarray(q, dtype=float).reshape(2)
    v = poly.vertices
    w = np.roll(v, -1, axis=0)
    e = w - v
    t = np.einsum("ij,ij->i", q - v, e) / np.einsum("ij,ij->i", e, e)
    t = np.clip(t, 0.0, 1.0)
    cand = v + t[:, None] * e
    d = np.linalg.norm(cand - q, axis=1)
    i = int(np.argmin(d))
    return cand[i], float(d[i])


def min_signed_distance(poly: PaddedPolygon, pose: Pose2, points: np.ndarray) -> float:
    """Exact minimum signed distance between the padded footprint at a pose
    and a set of world points: min over points of (point-to-polygon
    distance - pad_radius).  Negative values mean penetration."""
    body = pose.to_body(points)
    _, d = project_points_onto_polygon(poly, body)
    return float(d.min() - poly.pad_radius)


def boundary_grid(poly: PaddedPolygon, spacing: float) -> np.ndarray:
    """Boundary samples of the unpadded polygon at most `spacing` apart.

    Every vertex is included; each edge is subdivided uniformly into
    ceil(len/spacing) intervals.  Returned in edge order starting from
    vertex 0, without duplicating shared endpoints.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    v = poly.vertices
    w = np.roll(v, -1, axis=0)
    pts = []
    for a, bb in zip(v, w):
        length = float(np.linalg.norm(bb - a))
        n = max(1, int(np.ceil(length / spacing - 1e-12)))
        ts = np.arange(n) / n
        pts.append(a + ts[:, None] * (bb - a))
    return np.vstack(pts)
