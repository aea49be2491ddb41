"""Synthetic benchmark maps.

Each map is a closed rectilinear outline sampled into point obstacles at a
fixed arc-length spacing, the same representation a lidar scan of the real
room would produce.  All outline dimensions are multiples of the sampling
step, so the sampled counts are exact and stable.  Every map carries a
centerline reference path for the benchmark suites.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distance_field import ObstacleField, build_field
from .errors import DegeneratePath

RESOLUTION = 0.02
WIDTH = 1.2       # corridor width on all maps


@dataclass
class MapSpec:
    name: str
    points: np.ndarray     # (n, 2) obstacle points
    outlines: list         # list of (m, 2) closed vertex loops
    waypoints: np.ndarray  # centerline reference corners
    resolution: float = RESOLUTION

    def field(self, *, method: str = "exact", padding: float = 1.0) -> ObstacleField:
        return build_field(self.points, self.resolution, method=method,
                           padding=padding)


def sample_outline(vertices, spacing: float, closed: bool = True) -> np.ndarray:
    """Arc-length sampling of a polyline at exact spacing.

    For a closed loop whose perimeter is an integer multiple of `spacing`
    the result has exactly perimeter/spacing points (no duplicate at the
    seam).
    """
    v = np.asarray(vertices, dtype=float)
    if closed:
        v = np.vstack([v, v[:1]])
    seg = np.diff(v, axis=0)
    lens = np.linalg.norm(seg, axis=1)
    total = float(lens.sum())
    if total < spacing:
        raise DegeneratePath("outline shorter than the sampling step")
    n = int(round(total / spacing)) if closed else int(np.floor(total / spacing)) + 1
    s = np.arange(n) * spacing
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lens) - 1)
    frac = (s - cum[k]) / np.where(lens[k] > 0, lens[k], 1.0)
    return v[k] + frac[:, None] * seg[k]


def l_corridor() -> MapSpec:
    """Two perpendicular corridor legs joined at a corner.

    Perimeter 2*(4.21 + 4.0) = 16.42 m, sampled every 0.02 m: 821 points.
    """
    lx, ly, w = 4.21, 4.0, WIDTH
    outline = np.array([
        [0.0, 0.0], [lx, 0.0], [lx, w], [w, w], [w, ly], [0.0, ly]])
    pts = sample_outline(outline, RESOLUTION)
    c = w / 2.0
    waypoints = np.array([[lx - 0.6, c], [c, c], [c, ly - 0.6]])
    return MapSpec("l_corridor", pts, [outline], waypoints)


def docking_station() -> MapSpec:
    """Rectangular room with a docking bay recessed into the top wall.

    Perimeter 2*(4.0 + 3.0) + 2*1.06 = 16.12 m: 806 points.
    """
    rw, rh, depth, mouth = 4.0, 3.0, 1.06, WIDTH
    x0 = (rw - mouth) / 2.0
    outline = np.array([
        [0.0, 0.0], [rw, 0.0], [rw, rh],
        [x0 + mouth, rh], [x0 + mouth, rh + depth],
        [x0, rh + depth], [x0, rh], [0.0, rh]])
    pts = sample_outline(outline, RESOLUTION)
    waypoints = np.array([[0.6, rh / 2.0], [rw / 2.0, rh / 2.0],
                          [rw / 2.0, rh + depth - 0.6]])
    return MapSpec("docking_station", pts, [outline], waypoints)


def s_corridor() -> MapSpec:
    """Serpentine corridor: three parallel legs linked by two U-turns.

    Perimeter 6*4.58 + 4*1.7 - 2*1.2 = 31.88 m: 1594 points.
    """
    L, s, w = 4.58, 1.7, WIDTH
    outline = np.array([
        [0.0, 0.0], [L, 0.0], [L, s + w], [w, s + w], [w, 2 * s],
        [L, 2 * s], [L, 2 * s + w], [0.0, 2 * s + w], [0.0, s],
        [L - w, s], [L - w, w], [0.0, w]])
    pts = sample_outline(outline, RESOLUTION)
    c = w / 2.0
    waypoints = np.array([
        [0.6, c], [L - c, c], [L - c, s + c], [c, s + c],
        [c, 2 * s + c], [L - 0.6, 2 * s + c]])
    return MapSpec("s_corridor", pts, [outline], waypoints)


def walkway() -> MapSpec:
    """Long straight hall.  Perimeter 2*(15.0 + 3.3) = 36.6 m: 1830 points."""
    lw, lh = 15.0, 3.3
    outline = np.array([[0.0, 0.0], [lw, 0.0], [lw, lh], [0.0, lh]])
    pts = sample_outline(outline, RESOLUTION)
    waypoints = np.array([[0.8, lh / 2.0], [lw - 0.8, lh / 2.0]])
    return MapSpec("walkway", pts, [outline], waypoints)


MAPS = {
    "l_corridor": l_corridor,
    "docking_station": docking_station,
    "s_corridor": s_corridor,
    "walkway": walkway,
}


def get_map(name: str) -> MapSpec:
    try:
        return MAPS[name]()
    except KeyError:
        raise KeyError(f"unknown map {name!r}; choices: {sorted(MAPS)}") from None


def _centerline_samples(waypoints, step: float = 0.05):
    """Dense arc-length samples of the centerline.

    Returns (points, unit tangents, owning segment index) per sample.
    """
    wp = np.asarray(waypoints, dtype=float)
    seg = np.diff(wp, axis=0)
    lens = np.linalg.norm(seg, axis=1)
    pts, tangents, owner = [], [], []
    for k in range(len(lens)):
        if lens[k] < 1e-12:
            continue
        n = max(2, int(np.ceil(lens[k] / step)))
        for t in np.linspace(0.0, 1.0, n, endpoint=False):
            pts.append(wp[k] + t * seg[k])
            tangents.append(seg[k] / lens[k])
            owner.append(k)
    pts.append(wp[-1])
    tangents.append(seg[-1] / lens[-1])
    owner.append(len(lens) - 1)
    return np.array(pts), np.array(tangents), np.array(owner)


def random_start_cases(spec: MapSpec, n_cases: int, seed: int,
                       *, lateral: float = 0.2, heading: float = 0.4,
                       v_max: float = 0.8):
    """Randomized starting states along a map's centerline.

    Each case perturbs a centerline point laterally, twists the heading,
    and draws an initial forward velocity; the remaining centerline is the
    case's reference path.  Deterministic in `seed`.
    """
    rng = np.random.default_rng(seed)
    pts, tangents, owner = _centerline_samples(spec.waypoints)
    # skip the last stretch so every case keeps a reference to follow
    n_usable = max(1, int(0.6 * len(pts)))
    cases = []
    for _ in range(n_cases):
        i = int(rng.integers(0, n_usable))
        tang = tangents[i]
        normal = np.array([-tang[1], tang[0]])
        pos = pts[i] + rng.uniform(-lateral, lateral) * normal
        theta = np.arctan2(tang[1], tang[0]) + rng.uniform(-heading, heading)
        v0 = rng.uniform(0.0, v_max)
        x0 = np.array([pos[0], pos[1], theta, v0, 0.0])
        # reference: from the sample point through the remaining corners
        waypoints = np.vstack([pts[i], spec.waypoints[owner[i] + 1:]])
        cases.append({"x0": x0, "waypoints": waypoints})
    return cases
