"""Outer solver loops on small wall-avoidance problems.

The standing scenario is a straight tracking reference that hugs or
crosses a horizontal wall of sampled points, so the collision rows must
actually move the trajectory, not just hold slack at zero.
"""

import numpy as np
import pytest

from sip_colav import (DiffDriveModel, MapExit, ObstacleSubset, OcpProblem,
                       PaddedPolygon, Pose2, SolveConfig, Trajectory,
                       UncertaintyTube, build_field, min_signed_distance,
                       shift_warm_start, solve_nominal_ocp, solve_robust_ocp)

FOOT = PaddedPolygon([(-0.2, -0.15), (0.2, -0.15), (0.2, 0.15), (-0.2, 0.15)],
                     0.1)


def wall_field(y=0.2, x0=-0.5, x1=2.3, padding=2.0):
    xs = np.arange(x0, x1, 0.02)
    return build_field(np.stack([xs, np.full_like(xs, y)], -1), 0.02,
                       padding=padding)


def straight_problem(N=16, dt=0.2, v=0.5, y=0.0):
    model = DiffDriveModel.kinematic("standard")
    xs = np.zeros((N + 1, 5))
    xs[:, 0] = v * dt * np.arange(N + 1)
    xs[:, 1] = y
    xs[:, 3] = v
    us = np.zeros((N, 2))
    prob = OcpProblem(
        model=model, N=N, dt=dt, x0=xs[0], x_ref=xs, u_ref=us,
        Q=np.diag([10.0, 10.0, 1.0, 1.0, 1.0]), R=np.eye(2),
        Q_N=np.diag([10.0, 10.0, 1.0, 1.0, 1.0]),
        lb_x=np.array([-np.inf, -np.inf, -np.inf, -1.2, -1.6]),
        ub_x=np.array([np.inf, np.inf, np.inf, 1.2, 1.6]),
        lb_u=np.array([-1.6, -2.0]), ub_u=np.array([1.6, 2.0]))
    return prob, Trajectory(xs.copy(), us.copy())


def exact_min_sd(fld, traj):
    return min(min_signed_distance(FOOT, Pose2.from_state(x), fld.points)
               for x in traj.xs[1:])


class TestNominal:
    def test_wall_forces_detour_and_converges(self):
        # wall at y=0.2, footprint half-width 0.25: tracking y=0 violates
        fld = wall_field(y=0.2, x0=0.8)
        prob, guess = straight_problem()
        cfg = SolveConfig(max_iter=60, eps_cvg=1e-6)
        traj, subsets, report = solve_nominal_ocp(prob, fld, FOOT, guess, cfg)
        assert report.converged
        assert exact_min_sd(fld, traj) >= -1e-3
        assert traj.xs[1:-1, 1].min() < -0.02  # actually detoured
        assert any(s > 0 for r in report.records for s in r.subset_sizes)

    def test_obstacle_free_is_immediate(self):
        fld = wall_field(y=3.0, padding=4.0)  # far above the path
        prob, guess = straight_problem()
        cfg = SolveConfig(max_iter=20, eps_cvg=1e-6)
        traj, subsets, report = solve_nominal_ocp(prob, fld, FOOT, guess, cfg)
        assert report.converged
        assert report.iterations <= 3
        assert all(s == 0 for r in report.records for s in r.subset_sizes)
        assert np.abs(traj.xs - guess.xs).max() <= 1e-5

    def test_penetrating_guess_recovers(self):
        fld = wall_field(y=0.2, x0=0.8)
        prob, guess = straight_problem()
        bad = guess.copy()
        bad.xs[1:, 1] = 0.2  # footprint centers on the wall itself
        cfg = SolveConfig(max_iter=80, eps_cvg=1e-6)
        traj, subsets, report = solve_nominal_ocp(prob, fld, FOOT, bad, cfg)
        assert report.converged
        assert exact_min_sd(fld, traj) >= -1e-3

    def test_leaving_the_field_raises(self):
        fld = wall_field(padding=1.0)
        prob, guess = straight_problem(N=16, v=4.0)  # runs off the grid
        with pytest.raises(MapExit):
            solve_nominal_ocp(prob, fld, FOOT, guess,
                              SolveConfig(max_iter=5))

    def test_iteration_records(self):
        fld = wall_field(y=0.2, x0=0.8)
        prob, guess = straight_problem()
        _, _, report = solve_nominal_ocp(prob, fld, FOOT, guess,
                                         SolveConfig(max_iter=10))
        assert len(report.records) == report.iterations
        for r in report.records:
            assert len(r.subset_sizes) == prob.N + 1
            assert r.t_subset >= 0 and r.t_lower >= 0 and r.t_qp >= 0
            assert r.min_signed_distance is not None
        assert report.kkt_residual < 1e-5
        totals = report.phase_totals()
        assert totals["qp"] > 0 and totals["propagate"] == 0


class TestWarmStart:
    def test_shift_moves_stages_and_keeps_active(self):
        xs = np.arange(12, dtype=float).reshape(4, 3)
        us = np.arange(6, dtype=float).reshape(3, 2)
        subs = ObstacleSubset(
            stages=[(), (4, 7), (9,), (1, 2)],
            active=[{}, {4: True, 7: False}, {9: True}, {1: False, 2: True}],
            penetration=[False, True, False, False])
        traj2, subs2 = shift_warm_start(Trajectory(xs, us), subs)
        assert np.array_equal(traj2.xs[0], xs[1])
        assert np.array_equal(traj2.xs[-1], xs[-1])
        assert np.array_equal(traj2.us[-1], us[-1])
        assert subs2.stages[0] == (4,)      # inactive 7 dropped
        assert subs2.stages[1] == (9,)
        assert subs2.stages[2] == (2,)
        assert subs2.stages[3] == (2,)      # terminal repeats
        assert not any(subs2.penetration)

    def test_warm_start_converges_quicker(self):
        fld = wall_field(y=0.2, x0=0.8)
        prob, guess = straight_problem()
        cfg = SolveConfig(max_iter=60, eps_cvg=1e-6)
        traj, subsets, cold = solve_nominal_ocp(prob, fld, FOOT, guess, cfg)
        w_traj, w_subs = shift_warm_start(traj, subsets)
        prob2, _ = straight_problem()
        prob2.x0 = w_traj.xs[0].copy()
        traj2, _, warm = solve_nominal_ocp(prob2, fld, FOOT, w_traj, cfg,
                                           subsets0=w_subs)
        assert warm.converged
        assert warm.iterations <= cold.iterations
        assert exact_min_sd(fld, traj2) >= -1e-3


class TestRobust:
    def test_zero_uncertainty_matches_nominal(self):
        fld = wall_field(y=0.2, x0=0.8)
        prob, guess = straight_problem()
        cfg = SolveConfig(max_iter=60, eps_cvg=1e-6)
        t_nom, _, rep_n = solve_nominal_ocp(prob, fld, FOOT, guess, cfg)
        tube = UncertaintyTube(np.zeros((5, 5)), 0.0)
        prob2, guess2 = straight_problem()
        t_rob, _, rep_r = solve_robust_ocp(prob2, fld, FOOT, tube, guess2, cfg)
        assert rep_r.converged
        assert np.abs(t_rob.xs - t_nom.xs).max() <= 1e-6
        assert np.abs(t_rob.us - t_nom.us).max() <= 1e-6

    def test_uncertainty_widens_the_detour(self):
        fld = wall_field(y=0.2, x0=0.8)
        cfg = SolveConfig(max_iter=80, eps_cvg=1e-6)
        prob, guess = straight_problem()
        t_nom, _, _ = solve_nominal_ocp(prob, fld, FOOT, guess, cfg)
        tube = UncertaintyTube(np.zeros((5, 5)), 2.5e-4)
        prob2, guess2 = straight_problem()
        t_rob, _, rep = solve_robust_ocp(prob2, fld, FOOT, tube, guess2, cfg)
        assert rep.converged
        assert exact_min_sd(fld, t_rob) > exact_min_sd(fld, t_nom)
        for r in rep.records:
            assert r.t_propagate >= 0
        assert rep.phase_totals()["propagate"] > 0
