import numpy as np
import pytest

from sip_colav import PaddedPolygon

# footprint used throughout the experiments: five vertices, 0.2 m padding
STOCK_VERTICES = [(-0.18, -0.11), (0.45, -0.11), (0.45, 0.11),
                  (-0.18, 0.11), (-0.33, 0.00)]


@pytest.fixture
def stock_poly() -> PaddedPolygon:
    return PaddedPolygon(STOCK_VERTICES, 0.2)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


def random_convex_polygon(rng, n_min=3, n_max=8, scale=0.5) -> PaddedPolygon:
    """Random convex polygon: hull of points on a stretched circle."""
    n = int(rng.integers(n_min, n_max + 1))
    ang = np.sort(rng.uniform(0.0, 2 * np.pi, n))
    while np.min(np.diff(ang)) < 0.2:    # avoid near-duplicate vertices
        ang = np.sort(rng.uniform(0.0, 2 * np.pi, n))
    r = rng.uniform(0.3, 1.0, n) * scale
    # convexity is not guaranteed by radial sampling; take the hull order
    pts = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    from scipy.spatial import ConvexHull
    hull = ConvexHull(pts)
    verts = pts[hull.vertices]
    pad = float(rng.uniform(0.05, 0.3))
    return PaddedPolygon(verts, pad)
