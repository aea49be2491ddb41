"""Outer solver loops: local reduction with external active sets.

Each outer iteration refreshes the per-stage obstacle subsets by a grid
search over the footprint boundary, solves the lower-level maximizers of
every subsetted constraint, linearizes, and partially solves the upper
OCP.  The robust mode additionally propagates the uncertainty ellipsoids
along the current trajectory, freezes their square roots, and applies
backoff margins; exactly one subproblem is solved per propagation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dfield

import numpy as np

from .constraints import (LinearizedConstraint, eval_nominal, eval_penetration,
                          eval_robust, fallback_rows, rotational_backoff)
from .distance_field import ObstacleField, SubsetParams, update_obs_subset
from .errors import MapExit, NoConvergence, OutOfBounds, PenetrationCase
from .geometry import PaddedPolygon, Pose2, min_signed_distance
from .ocp import OcpProblem, Trajectory, solve_subproblem
from .uncertainty import UncertaintyTube, propagate, psd_sqrt

ACTIVE_SLACK_TOL = 1e-7


@dataclass
class SolveConfig:
    """Solver settings shared by the nominal and robust modes."""

    mode: str = "nominal"
    max_iter: int = 100
    eps_cvg: float = 1e-6
    sqp_iters_per_outer: int = 1
    eps_cl: float = 0.6
    eps_inside: float = 0.03
    eps_gs: float | None = None        # None: 1.5 * field resolution
    boundary_spacing: float = 0.016
    subset_cap: int = 25
    include_interior: bool = False
    fallback_level: float | None = None  # None: 5 * field resolution
    record_min_distance: bool = True
    backend: str = "banded"

    def subset_params(self) -> SubsetParams:
        return SubsetParams(eps_cl=self.eps_cl, eps_inside=self.eps_inside,
                            eps_gs=self.eps_gs, spacing=self.boundary_spacing,
                            cap=self.subset_cap,
                            include_interior=self.include_interior)


@dataclass
class ObstacleSubset:
    """Per-stage obstacle index sets plus last-solve activity flags."""

    stages: list[tuple[int, ...]]
    active: list[dict[int, bool]]
    penetration: list[bool]

    @classmethod
    def empty(cls, n_stages: int) -> "ObstacleSubset":
        return cls([()] * n_stages, [dict() for _ in range(n_stages)],
                   [False] * n_stages)

    def sizes(self) -> list[int]:
        return [len(s) for s in self.stages]


@dataclass
class IterationRecord:
    step_norm: float
    subset_sizes: list[int]
    max_violation: float | None       # worst linearized row value + backoff
    min_signed_distance: float | None  # exact metric over the trajectory
    n_lower_level: int
    t_subset: float
    t_lower: float
    t_qp: float
    t_propagate: float = 0.0


@dataclass
class SolverReport:
    mode: str
    converged: bool = False
    iterations: int = 0
    records: list[IterationRecord] = dfield(default_factory=list)
    kkt_residual: float = np.inf
    wall_time: float = 0.0

    def phase_totals(self) -> dict[str, float]:
        tot = {"subset": 0.0, "lower": 0.0, "qp": 0.0, "propagate": 0.0}
        for r in self.records:
            tot["subset"] += r.t_subset
            tot["lower"] += r.t_lower
            tot["qp"] += r.t_qp
            tot["propagate"] += r.t_propagate
        return tot


def _update_subsets(fld, poly, traj, subsets: ObstacleSubset,
                    params: SubsetParams):
    """One grid-search pass over all stages; returns per-stage fallback
    boundary points for penetrating stages."""
    worst: list[np.ndarray | None] = [None] * (traj.N + 1)
    for k in range(traj.N + 1):
        pose = Pose2.from_state(traj.xs[k])
        try:
            sub, pen, pts = update_obs_subset(fld, poly, pose,
                                              subsets.stages[k], params)
        except OutOfBounds as exc:
            raise MapExit(f"stage {k}: {exc}") from exc
        subsets.stages[k] = sub
        subsets.penetration[k] = pen
        if pen:
            worst[k] = pts
    return worst


def _nominal_rows(fld, poly, traj, subsets, worst, level):
    rows: list[LinearizedConstraint] = []
    n_lower = 0
    for k in range(1, traj.N + 1):
        x_k = traj.xs[k]
        if subsets.penetration[k]:
            rows.extend(fallback_rows(fld, poly, x_k, worst[k], k, level))
        for o in subsets.stages[k]:
            n_lower += 1
            try:
                h, grad, _ = eval_nominal(poly, x_k, fld.points[o])
            except PenetrationCase:
                h, grad = eval_penetration(poly, x_k, fld.points[o])
            rows.append(LinearizedConstraint(h, grad, x_k.copy(), 0.0, o, k))
    return rows, n_lower


def _robust_rows(fld, poly, traj, subsets, worst, level, Sigmas, sqrts):
    rows: list[LinearizedConstraint] = []
    n_lower = 0
    for k in range(1, traj.N + 1):
        x_k = traj.xs[k]
        if subsets.penetration[k]:
            rows.extend(fallback_rows(fld, poly, x_k, worst[k], k, level))
        beta_rot = rotational_backoff(poly, Sigmas[k])
        for o in subsets.stages[k]:
            n_lower += 1
            try:
                h, grad, _ = eval_robust(poly, x_k, fld.points[o], sqrts[k])
            except (PenetrationCase, NoConvergence):
                # alternating projections stall exactly when the ellipsoid
                # touches the footprint, so treat that as penetration
                h, grad = eval_penetration(poly, x_k, fld.points[o], sqrts[k])
            rows.append(LinearizedConstraint(h, grad, x_k.copy(), beta_rot, o, k))
    return rows, n_lower


def _mark_activity(subsets: ObstacleSubset, rows, slacks, row_values, eps_cvg):
    for d in subsets.active:
        d.clear()
    for i, r in enumerate(rows):
        if r.obstacle_index < 0:
            continue
        act = slacks[i] <= ACTIVE_SLACK_TOL and row_values[i] >= -10.0 * eps_cvg
        subsets.active[r.stage][r.obstacle_index] = bool(act)
    # members of penetrating stages were not linearized; keep them
    for k, pen in enumerate(subsets.penetration):
        if pen:
            for o in subsets.stages[k]:
                subsets.active[k][o] = True


def _solve_loop(prob: OcpProblem, fld: ObstacleField, poly: PaddedPolygon,
                guess: Trajectory, cfg: SolveConfig, subsets0, tube):
    t_start = time.perf_counter()
    robust = tube is not None
    report = SolverReport(mode="robust" if robust else "nominal")
    subsets = subsets0 if subsets0 is not None else ObstacleSubset.empty(prob.N + 1)
    params = cfg.subset_params()
    level = cfg.fallback_level if cfg.fallback_level is not None else 5.0 * fld.resolution
    traj = guess.copy()
    traj.xs[0] = prob.x0
    W = tube.W_matrix(prob.dt, prob.model.n_x) if robust else None

    for _ in range(cfg.max_iter):
        t_prop = 0.0
        Sigmas = sqrts = None
        state_bounds = None
        if robust:
            t0 = time.perf_counter()
            from .dynamics import integrate
            A_seq, C_seq = [], []
            for k in range(prob.N):
                st = integrate(prob.model, traj.xs[k], traj.us[k], None, prob.dt)
                A_seq.append(st.A)
                C_seq.append(st.C)
            Sigmas = propagate(A_seq, C_seq, tube.Sigma0, [W] * prob.N)
            sqrts = [psd_sqrt(S) for S in Sigmas]
            lo = np.tile(prob.lb_x, (prob.N + 1, 1))
            hi = np.tile(prob.ub_x, (prob.N + 1, 1))
            for k in range(1, prob.N + 1):
                margin = np.sqrt(np.clip(np.diag(Sigmas[k]), 0.0, None))
                bounded = np.isfinite(lo[k])
                lo[k, bounded] += margin[bounded]
                bounded = np.isfinite(hi[k])
                hi[k, bounded] -= margin[bounded]
            state_bounds = (lo, hi)
            t_prop = time.perf_counter() - t0

        t0 = time.perf_counter()
        worst = _update_subsets(fld, poly, traj, subsets, params)
        t_sub = time.perf_counter() - t0

        t0 = time.perf_counter()
        if robust:
            rows, n_lower = _robust_rows(fld, poly, traj, subsets, worst,
                                         level, Sigmas, sqrts)
        else:
            rows, n_lower = _nominal_rows(fld, poly, traj, subsets, worst, level)
        t_low = time.perf_counter() - t0

        res = solve_subproblem(prob, rows, traj, cfg.sqp_iters_per_outer,
                               state_bounds=state_bounds, backend=cfg.backend)
        step = traj.max_delta(res.trajectory)
        traj = res.trajectory
        _mark_activity(subsets, rows, res.slacks, res.row_values, cfg.eps_cvg)

        max_viol = None
        if rows:
            max_viol = float(max(v + r.backoff for v, r in zip(res.row_values, rows)))
        min_sd = None
        if cfg.record_min_distance:
            min_sd = min(min_signed_distance(poly, Pose2.from_state(traj.xs[k]),
                                             fld.points)
                         for k in range(1, prob.N + 1))
        report.records.append(IterationRecord(
            step_norm=step, subset_sizes=subsets.sizes(), max_violation=max_viol,
            min_signed_distance=min_sd, n_lower_level=n_lower,
            t_subset=t_sub, t_lower=t_low, t_qp=res.qp_time, t_propagate=t_prop))
        report.iterations += 1
        report.kkt_residual = res.kkt_residual
        if step <= cfg.eps_cvg:
            report.converged = True
            break

    report.wall_time = time.perf_counter() - t_start
    return traj, subsets, report


def solve_nominal_ocp(prob: OcpProblem, fld: ObstacleField, poly: PaddedPolygon,
                      guess: Trajectory, cfg: SolveConfig,
                      subsets0: ObstacleSubset | None = None):
    """Nominal collision-free OCP solve; returns (Trajectory, ObstacleSubset,
    SolverReport)."""
    return _solve_loop(prob, fld, poly, guess, cfg, subsets0, None)


def solve_robust_ocp(prob: OcpProblem, fld: ObstacleField, poly: PaddedPolygon,
                     tube: UncertaintyTube, guess: Trajectory, cfg: SolveConfig,
                     subsets0: ObstacleSubset | None = None):
    """Robustified solve: ellipsoid propagation with frozen square roots,
    collision and bound backoffs, one subproblem per propagation."""
    return _solve_loop(prob, fld, poly, guess, cfg, subsets0, tube)


def shift_warm_start(traj: Trajectory, subsets: ObstacleSubset,
                     steps: int = 1) -> tuple[Trajectory, ObstacleSubset]:
    """Shift a solved horizon forward for the next MPC tick.

    The trajectory shifts by `steps` stages with the final stage repeated;
    obstacle subsets shift along, keeping only the members whose
    constraints were active at the last solve.
    """
    N = traj.N
    xs = np.vstack([traj.xs[steps:], np.repeat(traj.xs[-1:], steps, axis=0)])
    us = np.vstack([traj.us[steps:], np.repeat(traj.us[-1:], steps, axis=0)])
    stages: list[tuple[int, ...]] = []
    active: list[dict[int, bool]] = []
    pen: list[bool] = []
    for k in range(N + 1):
        src = min(k + steps, N)
        keep = tuple(o for o in subsets.stages[src]
                     if subsets.active[src].get(o, False))
        stages.append(keep)
        active.append({o: True for o in keep})
        pen.append(False)
    return Trajectory(xs, us), ObstacleSubset(stages, active, pen)
