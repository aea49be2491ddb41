"""Distance transform and obstacle-subset selection."""

import numpy as np
import pytest

from sip_colav import (EmptyObstacleSet, ObstacleField, OutOfBounds,
                       PaddedPolygon, Pose2, SubsetParams, build_field,
                       build_field_from_occupancy, load_occupancy_pgm,
                       load_pointcloud_csv, save_pointcloud_csv, save_sd_pgm,
                       update_obs_subset)
from sip_colav.distance_field import closest_obstacle, signed_distance


def brute_force_distance(points, centers_x, centers_y):
    cx, cy = np.meshgrid(centers_x, centers_y, indexing="ij")
    cells = np.stack([cx.ravel(), cy.ravel()], axis=1)
    d = np.linalg.norm(cells[:, None, :] - points[None, :, :], axis=2)
    return d.min(axis=1).reshape(len(centers_x), len(centers_y)), \
        d.argmin(axis=1).reshape(len(centers_x), len(centers_y))


def test_exact_transform_matches_brute_force(rng):
    # 64x64 grid, random sparse points: exact to 1e-9
    for _ in range(5):
        pts = rng.uniform(0.1, 1.1, size=(rng.integers(3, 30), 2))
        fld = build_field(pts, 0.02, padding=0.1)
        cx = fld.origin[0] + 0.02 * np.arange(fld.shape[0])
        cy = fld.origin[1] + 0.02 * np.arange(fld.shape[1])
        d_ref, _ = brute_force_distance(pts, cx, cy)
        np.testing.assert_allclose(np.abs(fld.sd_grid), d_ref, atol=1e-9)
        # closest-obstacle map returns an actual nearest point
        ii, jj = rng.integers(0, fld.shape[0]), rng.integers(0, fld.shape[1])
        cell = fld.cell_center(ii, jj)
        idx = fld.co_grid[ii, jj]
        d_idx = np.linalg.norm(pts[idx] - cell)
        assert d_idx <= d_ref[ii, jj] + 1e-12


def test_dead_reckoning_error_bound(rng):
    # propagation error is bounded by one cell diagonal
    res = 0.02
    for _ in range(3):
        pts = rng.uniform(0.0, 1.0, size=(20, 2))
        exact = build_field(pts, res, padding=0.2, method="exact")
        dr = build_field(pts, res, padding=0.2, method="dead_reckoning")
        err = np.abs(np.abs(dr.sd_grid) - np.abs(exact.sd_grid))
        assert err.max() <= res * np.sqrt(2.0) + 1e-12


def test_signed_distance_negative_on_occupied():
    pts = np.array([[0.5, 0.5]])
    fld = build_field(pts, 0.02, padding=0.3)
    assert signed_distance(fld, [0.5, 0.5]) <= 0.0
    assert signed_distance(fld, [0.6, 0.5]) > 0.0
    idx, p = closest_obstacle(fld, [0.6, 0.5])
    assert idx == 0
    np.testing.assert_allclose(p, [0.5, 0.5])


def test_out_of_bounds_query():
    fld = build_field(np.array([[0.0, 0.0]]), 0.02, padding=0.1)
    with pytest.raises(OutOfBounds):
        signed_distance(fld, [5.0, 5.0])


def test_empty_points_rejected():
    with pytest.raises(EmptyObstacleSet):
        build_field(np.zeros((0, 2)), 0.02)


def test_occupancy_roundtrip(tmp_path):
    pts = np.array([[0.1, 0.1], [0.3, 0.1], [0.3, 0.3]])
    fld = build_field(pts, 0.02, padding=0.1)
    save_pointcloud_csv(tmp_path / "pts.csv", pts)
    again = load_pointcloud_csv(tmp_path / "pts.csv")
    np.testing.assert_allclose(again, pts, atol=1e-12)

    save_sd_pgm(tmp_path / "sd.pgm", fld)
    assert (tmp_path / "sd.pgm").stat().st_size > 0


def test_occupancy_pgm_loader(tmp_path):
    # one occupied cell in a 3x3 map
    occ = np.zeros((3, 3), dtype=bool)
    occ[1, 1] = True
    fld = build_field_from_occupancy(occ, 0.5, origin=(0.0, 0.0))
    assert fld.points.shape == (1, 2)
    np.testing.assert_allclose(fld.points[0], [0.5, 0.5])
    assert fld.sd_grid[1, 1] <= 0.0
    assert np.isclose(fld.sd_grid[0, 1], 0.5)
    assert np.isclose(fld.sd_grid[0, 0], 0.5 * np.sqrt(2))


class TestSubsetUpdate:
    """External active-set selection around a padded footprint."""

    def setup_method(self):
        # straight wall of points at x = 1.0
        ys = np.arange(-1.0, 1.0001, 0.02)
        self.pts = np.column_stack([np.ones_like(ys), ys])
        self.fld = build_field(self.pts, 0.02, padding=2.0)
        self.poly = PaddedPolygon([(-0.2, -0.15), (0.2, -0.15), (0.2, 0.15),
                                   (-0.2, 0.15)], 0.1)
        self.params = SubsetParams(eps_cl=0.6, eps_inside=0.03,
                                   spacing=0.016, cap=25)

    def test_far_pose_keeps_subset_empty(self):
        pose = Pose2(np.array([-0.2, 0.0]), 0.0)
        subset, pen, _ = update_obs_subset(self.fld, self.poly, pose, (),
                                           self.params)
        assert subset == ()
        assert pen is False

    def test_near_pose_collects_wall_points(self):
        # footprint edge at x = 0.9, wall at 1.0: inside eps_cl
        pose = Pose2(np.array([0.7, 0.0]), 0.0)
        subset, pen, _ = update_obs_subset(self.fld, self.poly, pose, (),
                                           self.params)
        assert pen is False
        assert len(subset) >= 1
        # all selected obstacles are wall points near the footprint
        sel = self.fld.points[list(subset)]
        assert np.all(np.abs(sel[:, 1]) <= 0.6)

    def test_previous_members_are_kept(self):
        pose = Pose2(np.array([0.7, 0.0]), 0.0)
        subset, _, _ = update_obs_subset(self.fld, self.poly, pose, (0, 1),
                                         self.params)
        assert 0 in subset and 1 in subset

    def test_penetrating_pose_flags_and_collects(self):
        # footprint centered on the wall
        pose = Pose2(np.array([1.0, 0.0]), 0.0)
        subset, pen, _ = update_obs_subset(self.fld, self.poly, pose, (),
                                           self.params)
        assert pen is True
        assert len(subset) >= 1
