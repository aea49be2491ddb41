"""Tracking OCP data and the SQP subproblem solver.

solve_subproblem runs a small number of full-step SQP iterations on the
current collision-constraint linearization: dynamics are re-integrated and
re-linearized every iteration, the tracking cost is exactly quadratic, and
the collision rows stay fixed (the caller refreshes them between calls).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constraints import LinearizedConstraint
from .dynamics import DiffDriveModel, integrate
from .qp import QpRow, QpSolution, StructuredQp


@dataclass
class Trajectory:
    """States (N+1, n_x) and inputs (N, n_u) over one horizon."""

    xs: np.ndarray
    us: np.ndarray

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.us = np.asarray(self.us, dtype=float)

    @property
    def N(self) -> int:
        return self.us.shape[0]

    def copy(self) -> "Trajectory":
        return Trajectory(self.xs.copy(), self.us.copy())

    def max_delta(self, other: "Trajectory") -> float:
        """Largest state or input change, used as the convergence measure."""
        return max(float(np.abs(self.xs - other.xs).max()),
                   float(np.abs(self.us - other.us).max()))


@dataclass
class OcpProblem:
    """Quadratic tracking OCP over a fixed horizon.

    Box bounds: lb_x/ub_x apply to states for stages 1..N (use +-inf for
    unbounded components), lb_u/ub_u to all inputs.  terminal_equality
    optionally pins components of x_N: (indices, values).
    """

    model: DiffDriveModel
    N: int
    dt: float
    x0: np.ndarray
    x_ref: np.ndarray
    u_ref: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Q_N: np.ndarray
    lb_x: np.ndarray = None
    ub_x: np.ndarray = None
    lb_u: np.ndarray = None
    ub_u: np.ndarray = None
    w_l1: float = 1e3
    w_l2: float = 1e4
    terminal_equality: tuple | None = None

    def __post_init__(self):
        n_x, n_u = self.model.n_x, self.model.n_u
        self.x0 = np.asarray(self.x0, dtype=float)
        self.x_ref = np.asarray(self.x_ref, dtype=float)
        self.u_ref = np.asarray(self.u_ref, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        self.Q_N = np.asarray(self.Q_N, dtype=float)
        for name in ("lb_x", "ub_x", "lb_u", "ub_u"):
            if getattr(self, name) is None:
                n = n_x if name.endswith("x") else n_u
                sign = -1.0 if name.startswith("lb") else 1.0
                setattr(self, name, sign * np.full(n, np.inf))
            else:
                setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        assert self.x_ref.shape == (self.N + 1, n_x)
        assert self.u_ref.shape == (self.N, n_u)

    def reference_trajectory(self) -> Trajectory:
        return Trajectory(self.x_ref.copy(), self.u_ref.copy())


@dataclass
class SubproblemResult:
    trajectory: Trajectory
    kkt_residual: float
    slacks: np.ndarray           # per collision row
    row_values: np.ndarray       # linearized row value at the new trajectory
    sqp_steps: list[float] = field(default_factory=list)
    ipm_iters: int = 0
    qp_time: float = 0.0


def _rows_to_qp(rows: list[LinearizedConstraint]) -> list[QpRow]:
    out = []
    for r in rows:
        rhs = float(r.grad_x @ r.x_lin) - r.value - r.backoff
        out.append(QpRow(r.stage, r.grad_x, rhs))
    return out


def solve_subproblem(prob: OcpProblem, rows: list[LinearizedConstraint],
                     guess: Trajectory, sqp_iters: int = 1,
                     state_bounds: tuple[np.ndarray, np.ndarray] | None = None,
                     backend: str = "banded") -> SubproblemResult:
    """Run up to sqp_iters full-step SQP iterations at fixed collision rows.

    state_bounds optionally overrides the per-stage state box (arrays of
    shape (N+1, n_x)), which is how uncertainty-tightened bounds enter.
    Raises QpFailure only through the hard bounds; collision rows are
    always slacked.
    """
    import time

    model, N, dt = prob.model, prob.N, prob.dt
    traj = guess.copy()
    traj.xs[0] = prob.x0
    qp_rows = _rows_to_qp(rows)
    if state_bounds is None:
        lb_x, ub_x = prob.lb_x, prob.ub_x
    else:
        lb_x, ub_x = state_bounds

    sol: QpSolution | None = None
    steps: list[float] = []
    qp_time = 0.0
    ipm_iters = 0
    for _ in range(max(1, sqp_iters)):
        A_seq, B_seq, r_seq = [], [], []
        for k in range(N):
            st = integrate(model, traj.xs[k], traj.us[k], None, dt)
            A_seq.append(st.A)
            B_seq.append(st.B)
            r_seq.append(st.x_next - st.A @ traj.xs[k] - st.B @ traj.us[k])
        t0 = time.perf_counter()
        qp = StructuredQp(A_seq, B_seq, r_seq, prob.x0, prob.Q, prob.R,
                          prob.Q_N, prob.x_ref, prob.u_ref, lb_x, ub_x,
                          prob.lb_u, prob.ub_u, qp_rows, prob.w_l1, prob.w_l2,
                          terminal=prob.terminal_equality, backend=backend)
        sol = qp.solve()
        qp_time += time.perf_counter() - t0
        ipm_iters += sol.ipm_iters
        new = Trajectory(sol.xs, sol.us)
        step = traj.max_delta(new)
        steps.append(step)
        traj = new
        if step < 1e-13:
            break

    row_values = np.array([r.eval_at(traj.xs[r.stage]) for r in rows])
    return SubproblemResult(traj, sol.kkt_residual, sol.slacks, row_values,
                            steps, ipm_iters, qp_time)
