"""Gridded signed-distance and closest-obstacle maps over point obstacles.

The field stores, per cell, the signed distance to the obstacle point set
(negative on occupied cells) and the index of the closest obstacle point.
Cell (ix, iy) has world center origin + resolution * (ix, iy).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyObstacleSet, OutOfBounds
from .geometry import PaddedPolygon, Pose2, project_points_onto_polygon


@dataclass
class ObstacleField:
    """Point obstacles plus derived occupancy / distance / closest maps."""

    points: np.ndarray        # (n_o, 2) world coordinates
    occupancy: np.ndarray     # (nx, ny) bool, True = occupied
    resolution: float
    origin: np.ndarray        # world center of cell (0, 0)
    sd_grid: np.ndarray       # (nx, ny) signed distance, <= 0 on occupied
    co_grid: np.ndarray       # (nx, ny) index into points of closest point

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.origin = np.asarray(self.origin, dtype=float).reshape(2)
        self.resolution = float(self.resolution)

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupancy.shape

    def cell_index(self, p) -> tuple[int, int]:
        """Nearest cell of a world position; OutOfBounds outside the grid."""
        p = np.asarray(p, dtype=float)
        ij = np.rint((p - self.origin) / self.resolution).astype(int)
        nx, ny = self.occupancy.shape
        if not (0 <= ij[0] < nx and 0 <= ij[1] < ny):
            raise OutOfBounds(f"position {p.tolist()} outside field")
        return int(ij[0]), int(ij[1])

    def cell_indices(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized nearest-cell lookup for (m, 2) world positions."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        ij = np.rint((pts - self.origin) / self.resolution).astype(int)
        nx, ny = self.occupancy.shape
        bad = (ij[:, 0] < 0) | (ij[:, 0] >= nx) | (ij[:, 1] < 0) | (ij[:, 1] >= ny)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise OutOfBounds(f"position {pts[k].tolist()} outside field")
        return ij[:, 0], ij[:, 1]

    def cell_center(self, ix, iy) -> np.ndarray:
        return self.origin + self.resolution * np.array([ix, iy], dtype=float)


def signed_distance(fld: ObstacleField, p) -> float:
    """Signed distance at the cell containing p (nearest-cell lookup)."""
    ix, iy = fld.cell_index(p)
    return float(fld.sd_grid[ix, iy])


def closest_obstacle(fld: ObstacleField, p) -> tuple[int, np.ndarray]:
    """Index and coordinates of the obstacle point closest to p's cell."""
    ix, iy = fld.cell_index(p)
    idx = int(fld.co_grid[ix, iy])
    return idx, fld.points[idx].copy()


def _occupancy_from_points(points, resolution, origin, shape):
    occ = np.zeros(shape, dtype=bool)
    ij = np.rint((points - origin) / resolution).astype(int)
    if ij.min() < 0 or np.any(ij >= np.array(shape)):
        raise OutOfBounds("a point falls outside the requested grid")
    occ[ij[:, 0], ij[:, 1]] = True
    return occ


def _exact_transform(points, centers_x, centers_y):
    """Exact nearest-obstacle distances and indices on the whole grid."""
    tree = cKDTree(points)
    grid = np.stack(np.meshgrid(centers_x, centers_y, indexing="ij"), axis=-1)
    d, idx = tree.query(grid.reshape(-1, 2))
    return d.reshape(grid.shape[:2]), idx.reshape(grid.shape[:2])


def _dead_reckoning_transform(points, centers_x, centers_y):
    """Two-pass 8-neighborhood transform carrying a closest-point map.

    Each cell borrows the closest-point candidate of an already-visited
    neighbor and re-measures the true Euclidean distance to it, so errors
    come only from wrong candidate assignments.
    """
    nx, ny = len(centers_x), len(centers_y)
    big = np.inf
    dist = np.full((nx, ny), big)
    cp = np.full((nx, ny), -1, dtype=np.int64)

    # seed cells that contain obstacle points with their best point
    res = centers_x[1] - centers_x[0] if nx > 1 else (centers_y[1] - centers_y[0])
    origin = np.array([centers_x[0], centers_y[0]])
    ij = np.rint((points - origin) / res).astype(int)
    for k, (i, j) in enumerate(ij):
        c = np.array([centers_x[i], centers_y[j]])
        d = float(np.hypot(*(c - points[k])))
        if d < dist[i, j]:
            dist[i, j] = d
            cp[i, j] = k

    # masks reference only cells the raster order has already finalized
    fwd = [(-1, -1), (-1, 0), (-1, 1), (0, -1)]
    bwd = [(1, 1), (1, 0), (1, -1), (0, 1)]

    def sweep(order_i, order_j, offsets):
        changed = False
        for i in order_i:
            cx = centers_x[i]
            for j in order_j:
                best = dist[i, j]
                bestk = cp[i, j]
                cy = centers_y[j]
                for di, dj in offsets:
                    ni, nj = i + di, j + dj
                    if 0 <= ni < nx and 0 <= nj < ny and cp[ni, nj] >= 0:
                        p = points[cp[ni, nj]]
                        d = np.hypot(cx - p[0], cy - p[1])
                        if d < best:
                            best = d
                            bestk = cp[ni, nj]
                if bestk != cp[i, j] or best < dist[i, j]:
                    dist[i, j] = best
                    cp[i, j] = bestk
                    changed = True
        return changed

    # a single forward/backward pair leaves rare candidate errors above one
    # cell diagonal; iterating to a fixed point removes them (2-3 pairs)
    for _ in range(8):
        c1 = sweep(range(nx), range(ny), fwd)
        c2 = sweep(range(nx - 1, -1, -1), range(ny - 1, -1, -1), bwd)
        if not (c1 or c2):
            break
    return dist, cp


def build_field(points, resolution: float, *, method: str = "exact",
                padding: float = 1.0, origin=None, shape=None) -> ObstacleField:
    """Build an ObstacleField from a point cloud.

    The grid covers the point bounding box plus `padding` on each side
    unless origin/shape are given explicitly.  method "exact" produces
    distances exact to the point set; "dead_reckoning" runs the two-pass
    propagation (error bounded by one cell diagonal in practice).
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if points.shape[0] == 0:
        raise EmptyObstacleSet("point cloud is empty")
    if method not in ("exact", "dead_reckoning"):
        raise ValueError("method must be 'exact' or 'dead_reckoning'")
    if origin is None:
        lo = np.floor((points.min(axis=0) - padding) / resolution) * resolution
    else:
        lo = np.asarray(origin, dtype=float)
    if shape is None:
        hi = points.max(axis=0) + padding
        nx = int(np.ceil((hi[0] - lo[0]) / resolution)) + 1
        ny = int(np.ceil((hi[1] - lo[1]) / resolution)) + 1
    else:
        nx, ny = shape
    centers_x = lo[0] + resolution * np.arange(nx)
    centers_y = lo[1] + resolution * np.arange(ny)
    occ = _occupancy_from_points(points, resolution, lo, (nx, ny))
    if method == "exact":
        dist, idx = _exact_transform(points, centers_x, centers_y)
    else:
        dist, idx = _dead_reckoning_transform(points, centers_x, centers_y)
    sd = np.where(occ, -dist, dist)
    return ObstacleField(points, occ, resolution, lo, sd, idx.astype(np.int64))


def build_field_from_occupancy(occupancy, resolution: float, origin,
                               *, method: str = "exact") -> ObstacleField:
    """Field from an occupancy grid; obstacle points are the centers of
    occupied cells that touch free space (or the grid border)."""
    occ = np.asarray(occupancy, dtype=bool)
    nx, ny = occ.shape
    if not occ.any():
        raise EmptyObstacleSet("occupancy grid has no occupied cells")
    interior = np.zeros_like(occ)
    interior[1:-1, 1:-1] = (occ[:-2, 1:-1] & occ[2:, 1:-1]
                            & occ[1:-1, :-2] & occ[1:-1, 2:])
    boundary = occ & ~interior
    ii, jj = np.nonzero(boundary)
    origin = np.asarray(origin, dtype=float)
    pts = origin + resolution * np.stack([ii, jj], axis=1).astype(float)
    fld = build_field(pts, resolution, method=method, origin=origin,
                      shape=(nx, ny))
    # keep the full grid occupancy, not just the extracted boundary cells
    sd = np.where(occ, -np.abs(fld.sd_grid), np.abs(fld.sd_grid))
    return ObstacleField(pts, occ, resolution, origin, sd, fld.co_grid)


# ---------------------------------------------------------------------------
# obstacle subset update


@dataclass
class SubsetParams:
    """Tuning knobs of the boundary grid search.

    eps_cl must exceed the footprint pad radius so every obstacle that can
    actively constrain the padded footprint is eligible for collection.
    eps_gs defaults to 1.5 * field resolution when left as None.
    """

    eps_cl: float
    eps_inside: float = 0.03
    eps_gs: float | None = None
    spacing: float = 0.016
    cap: int = 25
    include_interior: bool = False

    def resolved_eps_gs(self, resolution: float) -> float:
        return 1.5 * resolution if self.eps_gs is None else self.eps_gs


def _interior_lattice(poly: PaddedPolygon, spacing: float) -> np.ndarray:
    v = poly.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    xs = np.arange(lo[0], hi[0] + spacing / 2, spacing)
    ys = np.arange(lo[1], hi[1] + spacing / 2, spacing)
    g = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    inside = np.all(g @ poly.A.T + poly.b <= 0.0, axis=1)
    return g[inside]


def update_obs_subset(fld: ObstacleField, poly: PaddedPolygon, pose: Pose2,
                      prev, params: SubsetParams):
    """Grid-search update of one stage's obstacle subset.

    Samples the footprint boundary, reads the signed-distance field at each
    sample, and collects samples within eps_gs of the minimum.  If the
    minimum clears eps_inside, the closest obstacle of each collected
    sample within eps_cl joins the subset (capped by evicting members with
    the smallest current constraint value).  Otherwise the previous subset
    is returned unchanged together with the collected (body-frame) boundary
    points so the caller can build fallback constraints.

    Returns (subset tuple, penetration_flag, worst_boundary_points).
    """
    gam = poly.boundary_points(params.spacing)
    if params.include_interior:
        gam = np.vstack([gam, _interior_lattice(poly, 4.0 * params.spacing)])
    world = pose.to_world(gam)
    ix, iy = fld.cell_indices(world)
    sd = fld.sd_grid[ix, iy]
    sd_gs = float(sd.min())
    eps_gs = params.resolved_eps_gs(fld.resolution)
    collected = sd <= sd_gs + eps_gs

    prev = tuple(int(i) for i in prev)
    cand_idx = fld.co_grid[ix[collected], iy[collected]]
    cand_pts = fld.points[cand_idx]
    d = np.linalg.norm(world[collected] - cand_pts, axis=1)

    if sd_gs < params.eps_inside:
        # keep the previous members; the touching obstacles join too, so a
        # stage that starts out penetrating is not left unconstrained
        sub = sorted(set(prev) | set(int(i) for i in np.unique(cand_idx)))
        return tuple(sub), True, gam[collected]

    keep = np.unique(cand_idx[d <= params.eps_cl])
    subset = sorted(set(prev) | set(int(i) for i in keep))

    if len(subset) > params.cap:
        # evict members farthest from constraining the current pose
        body = pose.to_body(fld.points[subset])
        _, dists = project_points_onto_polygon(poly, body)
        h = poly.pad_radius - dists
        order = np.lexsort((subset, h))  # ascending h, ties by lower index
        drop = set(int(subset[i]) for i in order[: len(subset) - params.cap])
        subset = [i for i in subset if i not in drop]

    return tuple(subset), False, np.empty((0, 2))


# ---------------------------------------------------------------------------
# file formats


def load_pointcloud_csv(path) -> np.ndarray:
    """Point cloud CSV with header 'x,y'; returns (n, 2) floats."""
    path = Path(path)
    with path.open() as f:
        header = f.readline().strip()
        if [c.strip() for c in header.split(",")] != ["x", "y"]:
            raise ValueError(f"{path}: expected header 'x,y', got '{header}'")
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    if data.size == 0:
        raise EmptyObstacleSet(f"{path}: no obstacle points")
    return data.reshape(-1, 2)


def save_pointcloud_csv(path, points) -> None:
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    with Path(path).open("w") as f:
        f.write("x,y\n")
        for p in points:
            f.write(f"{float(p[0])!r},{float(p[1])!r}\n")


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def load_occupancy_pgm(path, *, method: str = "exact") -> ObstacleField:
    """Occupancy from a binary PGM (P5) plus a JSON sidecar holding
    {resolution_m, origin_xy, occupied_threshold}.  Pixels at or below the
    threshold are occupied.  Row 0 of the image is the top (max y)."""
    path = Path(path)
    meta = json.loads(_sidecar_path(path).read_text())
    resolution = float(meta["resolution_m"])
    origin = np.asarray(meta["origin_xy"], dtype=float)
    thresh = int(meta["occupied_threshold"])
    with path.open("rb") as f:
        magic = f.readline().strip()
        if magic != b"P5":
            raise ValueError(f"{path}: not a binary PGM (P5) file")
        tokens: list[bytes] = []
        while len(tokens) < 3:
            line = f.readline()
            if not line:
                raise ValueError(f"{path}: truncated PGM header")
            line = line.split(b"#")[0]
            tokens.extend(line.split())
        w, h, maxval = (int(t) for t in tokens[:3])
        if maxval > 255:
            raise ValueError(f"{path}: only 8-bit PGM supported")
        raw = np.frombuffer(f.read(w * h), dtype=np.uint8).reshape(h, w)
    # image row 0 = top of the map; flip into (ix, iy) with iy up
    occ = (raw <= thresh)[::-1].T
    return build_field_from_occupancy(occ, resolution, origin, method=method)


@dataclass
class SdRaster:
    """Signed-distance grid round-tripped from a PGM dump.

    Carries only the raster and its geometry; obstacle points are not
    recoverable from the image.
    """

    sd_grid: np.ndarray
    resolution: float
    origin: np.ndarray

    def cell_index(self, p) -> tuple[int, int]:
        p = np.asarray(p, dtype=float)
        ij = np.rint((p - self.origin) / self.resolution).astype(int)
        nx, ny = self.sd_grid.shape
        if not (0 <= ij[0] < nx and 0 <= ij[1] < ny):
            raise OutOfBounds(f"position {p.tolist()} outside raster")
        return int(ij[0]), int(ij[1])


def load_sd_pgm(path) -> SdRaster:
    """Inverse of save_sd_pgm up to 8-bit quantization of the values."""
    path = Path(path)
    meta = json.loads(_sidecar_path(path).read_text())
    if meta.get("kind") != "signed_distance":
        raise ValueError(f"{path}: sidecar does not describe a signed-distance dump")
    with path.open("rb") as f:
        magic = f.readline().strip()
        if magic != b"P5":
            raise ValueError(f"{path}: not a binary PGM (P5) file")
        tokens: list[bytes] = []
        while len(tokens) < 3:
            line = f.readline()
            if not line:
                raise ValueError(f"{path}: truncated PGM header")
            line = line.split(b"#")[0]
            tokens.extend(line.split())
        w, h, maxval = (int(t) for t in tokens[:3])
        if maxval > 255:
            raise ValueError(f"{path}: only 8-bit PGM supported")
        raw = np.frombuffer(f.read(w * h), dtype=np.uint8).reshape(h, w)
    lo, hi = float(meta["sd_min"]), float(meta["sd_max"])
    span = hi - lo if hi > lo else 1.0
    sd = raw[::-1].T.astype(float) / 255.0 * span + lo
    return SdRaster(sd, float(meta["resolution_m"]),
                    np.asarray(meta["origin_xy"], dtype=float))


def save_sd_pgm(path, fld: ObstacleField) -> None:
    """Write the signed-distance grid as an 8-bit PGM with a JSON sidecar
    recording the affine value mapping."""
    path = Path(path)
    sd = fld.sd_grid
    lo, hi = float(sd.min()), float(sd.max())
    span = hi - lo if hi > lo else 1.0
    img = np.rint((sd - lo) / span * 255.0).astype(np.uint8)
    raster = img.T[::-1]  # rows top-down
    h, w = raster.shape
    with path.open("wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(raster.tobytes())
    meta = {
        "kind": "signed_distance",
        "resolution_m": fld.resolution,
        "origin_xy": fld.origin.tolist(),
        "sd_min": lo,
        "sd_max": hi,
    }
    _sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n")
