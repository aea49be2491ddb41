"""Synthetic benchmark maps: outline sampling and randomized starts."""

import numpy as np
import pytest

from sip_colav import signed_distance
from sip_colav.maps import (MAPS, get_map, random_start_cases, sample_outline)


def dist_to_outline(p, verts):
    """Exact distance from p to a closed polyline."""
    v = np.vstack([verts, verts[:1]])
    best = np.inf
    for a, b in zip(v[:-1], v[1:]):
        ab = b - a
        t = np.clip(np.dot(p - a, ab) / max(np.dot(ab, ab), 1e-30), 0.0, 1.0)
        best = min(best, float(np.linalg.norm(a + t * ab - p)))
    return best


class TestSampleOutline:
    def test_closed_square_count_and_spacing(self):
        sq = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
        pts = sample_outline(sq, 0.02)
        assert pts.shape == (200, 2)  # perimeter 4 / spacing 0.02
        gaps = np.linalg.norm(np.diff(np.vstack([pts, pts[:1]]), axis=0),
                              axis=1)
        assert np.allclose(gaps, 0.02, atol=1e-9)

    def test_open_polyline(self):
        pts = sample_outline([(0.0, 0.0), (1.0, 0.0)], 0.25, closed=False)
        assert np.allclose(pts[0], [0.0, 0.0])
        assert np.allclose(pts[-1], [1.0, 0.0])

    def test_points_lie_on_the_outline(self):
        tri = [(0.0, 0.0), (2.0, 0.0), (1.0, 1.5)]
        for p in sample_outline(tri, 0.05):
            assert dist_to_outline(p, np.asarray(tri)) <= 1e-9


class TestBuiltinMaps:
    # obstacle counts are part of the published benchmark definition
    EXPECTED = {"l_corridor": 821, "docking_station": 806,
                "s_corridor": 1594, "walkway": 1830}

    @pytest.mark.parametrize("name,count", sorted(EXPECTED.items()))
    def test_obstacle_counts(self, name, count):
        spec = get_map(name)
        assert spec.points.shape == (count, 2)
        assert spec.resolution == 0.02

    @pytest.mark.parametrize("name", sorted(EXPECTED))
    def test_points_on_outlines(self, name):
        spec = get_map(name)
        for p in spec.points[::17]:
            assert min(dist_to_outline(p, np.asarray(o))
                       for o in spec.outlines) <= 1e-9

    @pytest.mark.parametrize("name", sorted(EXPECTED))
    def test_waypoints_clear_of_walls(self, name):
        # the reference corners must leave room for the stock footprint
        spec = get_map(name)
        for w in spec.waypoints:
            d = min(dist_to_outline(np.asarray(w, dtype=float),
                                    np.asarray(o)) for o in spec.outlines)
            assert d >= 0.45

    def test_unknown_map_raises(self):
        with pytest.raises(KeyError):
            get_map("atlantis")

    def test_field_contains_waypoints(self):
        spec = get_map("l_corridor")
        fld = spec.field(padding=1.0)
        for w in spec.waypoints:
            signed_distance(fld, np.asarray(w, dtype=float))  # no OutOfBounds


class TestRandomStarts:
    def test_deterministic_and_distinct(self):
        spec = get_map("l_corridor")
        a = random_start_cases(spec, 10, seed=7)
        b = random_start_cases(spec, 10, seed=7)
        assert len(a) == 10
        for ca, cb in zip(a, b):
            assert np.array_equal(ca["x0"], cb["x0"])
            assert np.array_equal(ca["waypoints"], cb["waypoints"])
        c = random_start_cases(spec, 10, seed=8)
        assert any(not np.array_equal(ca["x0"], cc["x0"])
                   for ca, cc in zip(a, c))

    def test_starts_are_usable(self):
        spec = get_map("l_corridor")
        fld = spec.field(padding=1.0)
        for case in random_start_cases(spec, 25, seed=3):
            x0, wps = case["x0"], case["waypoints"]
            assert x0.shape == (5,)
            assert abs(x0[3]) <= 0.8 + 1e-12
            # start inside the corridor, off the walls
            assert signed_distance(fld, x0[:2]) > 0.15
            # remaining waypoints end at the map goal
            assert np.allclose(wps[-1], spec.waypoints[-1])
            assert wps.shape[0] >= 2
