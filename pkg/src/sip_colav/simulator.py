"""Closed-loop MPC simulation.

The loop is plain receding horizon: shift the previous solution, rebuild
the obstacle subsets, run a fixed number of outer iterations, apply the
first input to the plant with an injected disturbance, repeat.  The plant
model may differ from the controller model (model mismatch studies).  All
randomness flows through one seeded generator so runs are reproducible
bit for bit.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field as dfield
from pathlib import Path

import numpy as np

from .distance_field import ObstacleField
from .dynamics import DiffDriveModel, integrate
from .errors import DegeneratePath, MapExit, QpFailure
from .geometry import PaddedPolygon, Pose2, min_signed_distance
from .ocp import OcpProblem, Trajectory
from .solver import (ObstacleSubset, SolveConfig, shift_warm_start,
                     solve_nominal_ocp, solve_robust_ocp)
from .uncertainty import UncertaintyTube, disturbance_matrix


@dataclass
class LimitProfile:
    """Velocity and acceleration magnitude limits."""

    v_max: float
    omega_max: float
    a_max: float
    alpha_max: float

    def __post_init__(self):
        if min(self.v_max, self.omega_max, self.a_max, self.alpha_max) <= 0:
            raise ValueError("limits must be positive")


# the three named robot configurations used throughout the experiments
LIMIT_PROFILES = {
    "slow": LimitProfile(0.8, 0.8, 1.2, 1.2),
    "medium": LimitProfile(1.2, 1.2, 1.6, 1.6),
    "fast": LimitProfile(1.6, 1.6, 2.0, 2.0),
}


@dataclass
class Scenario:
    """Everything one closed-loop run needs."""

    field: ObstacleField
    poly: PaddedPolygon
    model: DiffDriveModel           # controller model
    cfg: SolveConfig
    waypoints: np.ndarray           # (m, 2) reference path corners
    limits: LimitProfile
    N: int = 20
    dt: float = 0.05                # control period == stage length
    n_steps: int = 200
    seed: int = 0
    tube: UncertaintyTube | None = None   # robust mode when set
    disturbance: object = None      # plant W spec; defaults to tube's W
    plant_model: DiffDriveModel | None = None  # defaults to `model`
    weights: dict | None = None
    overrun: str = "wait"           # "wait" | "hold"
    time_budget: float | None = None  # seconds; None disables overrun checks

    def plant(self) -> DiffDriveModel:
        return self.plant_model if self.plant_model is not None else self.model

    def plant_disturbance(self) -> np.ndarray:
        """Disturbance shape seen by the plant.  Kept separate from the
        controller's tube so a nominal and a robust run over the same seed
        face the same noise realization."""
        n = self.plant().n_x
        spec = self.disturbance
        if spec is None:
            spec = self.tube.W if self.tube is not None else 0.0
        return disturbance_matrix(spec, self.dt, n)


@dataclass
class TickRecord:
    t: float
    x_plant: np.ndarray
    u_applied: np.ndarray
    min_sd: float
    solver_iters: int
    kkt_residual: float
    wall_time: float
    overrun: bool = False
    failure: str = ""


@dataclass
class RunLog:
    records: list[TickRecord] = dfield(default_factory=list)
    aborted: str = ""

    def min_distances(self) -> np.ndarray:
        return np.array([r.min_sd for r in self.records])

    def negative_fraction(self) -> float:
        d = self.min_distances()
        return float(np.mean(d < 0.0)) if d.size else 0.0

    def violation_histogram(self, bin_width: float = 0.005):
        """Histogram of negative minimum distances (violations only)."""
        d = self.min_distances()
        neg = -d[d < 0.0]
        if neg.size == 0:
            return [], []
        n_bins = int(np.ceil(neg.max() / bin_width)) or 1
        edges = np.arange(n_bins + 1) * bin_width
        counts, _ = np.histogram(neg, bins=edges)
        return counts.tolist(), edges.tolist()

    def timing_quantiles(self, qs=(0.5, 0.9, 0.99)) -> dict:
        t = np.array([r.wall_time for r in self.records])
        if t.size == 0:
            return {str(q): 0.0 for q in qs}
        return {str(q): float(np.quantile(t, q)) for q in qs}

    def summary(self) -> dict:
        counts, edges = self.violation_histogram()
        d = self.min_distances()
        return {
            "n_ticks": len(self.records),
            "negative_fraction": self.negative_fraction(),
            "worst_min_distance": float(d.min()) if d.size else None,
            "violation_histogram": {"bin_width": 0.005, "counts": counts,
                                    "edges": edges},
            "timing_quantiles": self.timing_quantiles(),
            "aborted": self.aborted,
        }

    def save_csv(self, path) -> None:
        with Path(path).open("w") as f:
            n_x = self.records[0].x_plant.shape[0] if self.records else 0
            xcols = ",".join(f"x{i}" for i in range(n_x))
            f.write(f"t,{xcols},u0,u1,min_sd,iters,kkt,wall_time,overrun\n")
            for r in self.records:
                xs = ",".join(repr(float(v)) for v in r.x_plant)
                f.write(f"{float(r.t)!r},{xs},{float(r.u_applied[0])!r},"
                        f"{float(r.u_applied[1])!r},{float(r.min_sd)!r},"
                        f"{r.solver_iters},{float(r.kkt_residual)!r},"
                        f"{float(r.wall_time)!r},{int(r.overrun)}\n")

    def save_summary(self, path) -> None:
        with Path(path).open("w") as f:
            json.dump(self.summary(), f, indent=1)
            f.write("\n")


def evaluate_min_distance(points, poly: PaddedPolygon, pose: Pose2) -> float:
    """Ground-truth clearance metric: exact min over all obstacle points of
    (distance to the footprint polygon) - pad_radius.  Never touches the
    grid, so it is the arbiter for every reported statistic."""
    pts = points.points if isinstance(points, ObstacleField) else points
    return min_signed_distance(poly, pose, pts)


def _trapezoid_times(length: float, v_max: float, a_max: float):
    """Time grid helper: durations of accel / cruise / decel for one segment
    starting and ending at rest."""
    t_a = v_max / a_max
    d_a = 0.5 * a_max * t_a * t_a
    if 2.0 * d_a >= length:
        # triangular: peak velocity sqrt(a L)
        t_a = np.sqrt(length / a_max)
        return t_a, 0.0, t_a
    t_c = (length - 2.0 * d_a) / v_max
    return t_a, t_c, t_a


def generate_reference(waypoints, limits: LimitProfile, dt: float,
                       model: DiffDriveModel | None = None,
                       n_states: int | None = None):
    """Piecewise-linear path with a trapezoidal speed profile.

    Returns (x_ref (n,n_x), u_ref (n-1,2)).  Headings follow the path
    tangent (unwrapped); each corner is passed at rest, which respects the
    acceleration limit without path smoothing.  The reference makes no
    attempt to avoid obstacles.
    """
    wp = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    if wp.shape[0] < 2:
        raise DegeneratePath("need at least two waypoints")
    if model is None:
        model = DiffDriveModel.kinematic()
    n_x = model.n_x if n_states is None else n_states

    # arc-length speed profile, one trapezoid per segment
    ts = [0.0]
    ss = [0.0]
    seg_id = [0]
    t0 = 0.0
    s0 = 0.0
    for i in range(wp.shape[0] - 1):
        L = float(np.linalg.norm(wp[i + 1] - wp[i]))
        if L < 1e-12:
            continue
        t_a, t_c, t_d = _trapezoid_times(L, limits.v_max, limits.a_max)
        v_pk = limits.a_max * t_a
        T = t_a + t_c + t_d
        n_sub = max(1, int(np.ceil(T / dt)))
        for j in range(1, n_sub + 1):
            tau = min(j * dt, T)
            if tau <= t_a:
                s = 0.5 * limits.a_max * tau * tau
            elif tau <= t_a + t_c:
                s = 0.5 * v_pk * t_a + v_pk * (tau - t_a)
            else:
                back = T - tau
                s = L - 0.5 * limits.a_max * back * back
            ts.append(t0 + tau)
            ss.append(s0 + min(s, L))
            seg_id.append(i)
            if tau >= T:
                break
        t0 += T
        s0 += L
    if len(ts) < 2:
        raise DegeneratePath("path has zero length")

    seg_len = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    seg_start = np.concatenate([[0.0], np.cumsum(seg_len)])

    n = len(ts)
    xs = np.zeros((n, n_x))
    for i, (s, k) in enumerate(zip(ss, seg_id)):
        local = s - seg_start[k]
        frac = 0.0 if seg_len[k] < 1e-12 else local / seg_len[k]
        frac = min(max(frac, 0.0), 1.0)
        xs[i, 0:2] = wp[k] + frac * (wp[k + 1] - wp[k])
    # tangent headings, unwrapped so the reference never jumps by 2 pi
    heads = np.zeros(n)
    for i, k in enumerate(seg_id):
        tang = wp[k + 1] - wp[k]
        heads[i] = model.heading_from_tangent(tang)
    xs[:, 2] = np.unwrap(heads)
    # reference velocities from the profile (finite differences of s)
    if n_x > 3:
        v = np.gradient(np.asarray(ss), np.asarray(ts))
        xs[:, 3] = np.clip(v, -limits.v_max, limits.v_max)
    us = np.zeros((n - 1, model.n_u))
    return xs, us


def _mpc_problem(sc: Scenario, x0, x_ref, u_ref) -> OcpProblem:
    w = sc.weights or {}
    n_x = sc.model.n_x
    q_diag = np.asarray(w.get("Q", [10.0, 10.0, 1.0, 1.0, 1.0]
                              + [1.0] * (n_x - 5)), dtype=float)
    r_diag = np.asarray(w.get("R", [1.0, 1.0]), dtype=float)
    qn_diag = np.asarray(w.get("Q_N", q_diag), dtype=float)
    lb_x = np.full(n_x, -np.inf)
    ub_x = np.full(n_x, np.inf)
    lb_x[3], ub_x[3] = -sc.limits.v_max, sc.limits.v_max
    lb_x[4], ub_x[4] = -sc.limits.omega_max, sc.limits.omega_max
    return OcpProblem(
        model=sc.model, N=sc.N, dt=sc.dt, x0=x0,
        x_ref=x_ref, u_ref=u_ref,
        Q=np.diag(q_diag), R=np.diag(r_diag), Q_N=np.diag(qn_diag),
        lb_x=lb_x, ub_x=ub_x,
        lb_u=np.array([-sc.limits.a_max, -sc.limits.alpha_max]),
        ub_u=np.array([sc.limits.a_max, sc.limits.alpha_max]),
        w_l1=float(w.get("slack_l1", 1e3)), w_l2=float(w.get("slack_l2", 1e4)),
    )


def sample_disturbance(rng: np.random.Generator, W: np.ndarray,
                       boundary_only: bool = False) -> np.ndarray:
    """Uniform draw from the solid ellipsoid E(0, W) (boundary sphere with
    boundary_only, for stress tests)."""
    n = W.shape[0]
    g = rng.standard_normal(n)
    norm = np.linalg.norm(g)
    if norm < 1e-300:
        return np.zeros(n)
    u = g / norm
    r = 1.0 if boundary_only else rng.uniform(0.0, 1.0) ** (1.0 / n)
    # W = M M^T with M from eigh; ellipsoid point = M (r u)
    vals, vecs = np.linalg.eigh(0.5 * (W + W.T))
    M = vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))
    return M @ (r * u)


def _reference_window(x_ref_full, u_ref_full, start: int, N: int):
    """Slice N+1 reference states starting at `start`, padding with the
    final state once the path ends."""
    n = x_ref_full.shape[0]
    idx = np.minimum(np.arange(start, start + N + 1), n - 1)
    uidx = np.minimum(np.arange(start, start + N), max(n - 2, 0))
    return x_ref_full[idx], u_ref_full[uidx] if u_ref_full.shape[0] else np.zeros((N, 2))


def run_mpc(sc: Scenario) -> RunLog:
    """Closed-loop run; returns the per-tick log.

    Solver failures abort the run (recorded, not raised): a real controller
    would engage a safety stop, and for benchmarking the abort itself is
    the signal.
    """
    rng = np.random.default_rng(sc.seed)
    plant = sc.plant()
    x_ref_full, u_ref_full = generate_reference(sc.waypoints, sc.limits,
                                                sc.dt, sc.model)
    if plant.n_x != sc.model.n_x:
        raise ValueError("plant and controller must share the state layout")

    W_plant = sc.plant_disturbance()
    noisy = float(np.abs(W_plant).max()) > 0.0

    x = x_ref_full[0].copy()
    traj = Trajectory(np.tile(x, (sc.N + 1, 1)), np.zeros((sc.N, sc.model.n_u)))
    subsets = ObstacleSubset.empty(sc.N + 1)
    log = RunLog()
    pending: list[np.ndarray] = []   # input queue for the hold policy

    for k in range(sc.n_steps):
        x_ref, u_ref = _reference_window(x_ref_full, u_ref_full, k, sc.N)
        prob = _mpc_problem(sc, x, x_ref, u_ref)
        t0 = time.perf_counter()
        failure = ""
        try:
            if sc.tube is not None:
                traj, subsets, rep = solve_robust_ocp(
                    prob, sc.field, sc.poly, sc.tube, traj, sc.cfg, subsets)
            else:
                traj, subsets, rep = solve_nominal_ocp(
                    prob, sc.field, sc.poly, traj, sc.cfg, subsets)
        except (QpFailure, MapExit) as exc:
            failure = f"{type(exc).__name__}: {exc}"
        wall = time.perf_counter() - t0

        overrun = sc.time_budget is not None and wall > sc.time_budget
        if failure:
            log.aborted = failure
            log.records.append(TickRecord(
                t=k * sc.dt, x_plant=x.copy(), u_applied=np.zeros(sc.model.n_u),
                min_sd=evaluate_min_distance(sc.field, sc.poly,
                                             Pose2.from_state(x)),
                solver_iters=0, kkt_residual=np.inf, wall_time=wall,
                overrun=overrun, failure=failure))
            break

        if overrun and sc.overrun == "hold" and pending:
            u0 = pending.pop(0)
        else:
            u0 = traj.us[0].copy()
            pending = [u.copy() for u in traj.us[1:]]

        w = sample_disturbance(rng, W_plant) if noisy else None
        step = integrate(plant, x, u0, w, sc.dt)
        x = step.x_next
        min_sd = evaluate_min_distance(sc.field, sc.poly, Pose2.from_state(x))
        log.records.append(TickRecord(
            t=(k + 1) * sc.dt, x_plant=x.copy(), u_applied=u0,
            min_sd=min_sd, solver_iters=rep.iterations,
            kkt_residual=rep.kkt_residual, wall_time=wall, overrun=overrun))

        traj, subsets = shift_warm_start(traj, subsets)
        traj.xs[0] = x
    return log
