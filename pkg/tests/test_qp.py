"""Structured QP against a dense reference solver.

Every comparison builds the same problem in cvxpy with explicit stage
variables and solves it with CLARABEL, then checks the structured
interior-point solution against it.
"""

import cvxpy as cp
import numpy as np
import pytest

from sip_colav import QpFailure
from sip_colav.qp import QpRow, StructuredQp


def random_problem(rng, N=5, n_x=3, n_u=2, n_rows=4, finite_bounds=True):
    A_seq = [np.eye(n_x) + 0.1 * rng.normal(size=(n_x, n_x)) for _ in range(N)]
    B_seq = [rng.normal(size=(n_x, n_u)) * 0.5 for _ in range(N)]
    r_seq = [rng.normal(size=n_x) * 0.1 for _ in range(N)]
    x0 = rng.normal(size=n_x) * 0.5
    Q = np.diag(rng.uniform(0.5, 2.0, n_x))
    R = np.diag(rng.uniform(0.1, 1.0, n_u))
    QN = Q * 3.0
    x_ref = rng.normal(size=(N + 1, n_x)) * 0.3
    u_ref = np.zeros((N, n_u))
    if finite_bounds:
        lb_u, ub_u = -2.0 * np.ones(n_u), 2.0 * np.ones(n_u)
        lb_x, ub_x = -5.0 * np.ones(n_x), 5.0 * np.ones(n_x)
    else:
        lb_u = np.full(n_u, -np.inf)
        ub_u = np.full(n_u, np.inf)
        lb_x = np.full(n_x, -np.inf)
        ub_x = np.full(n_x, np.inf)
    rows = []
    for _ in range(n_rows):
        stage = int(rng.integers(1, N + 1))
        coef = rng.normal(size=n_x)
        rows.append(QpRow(stage=stage, coef=coef,
                          rhs=float(rng.normal() * 0.5)))
    return dict(A_seq=A_seq, B_seq=B_seq, r_seq=r_seq, x0=x0, Q=Q, R=R,
                QN=QN, x_ref=x_ref, u_ref=u_ref, lb_x=lb_x, ub_x=ub_x,
                lb_u=lb_u, ub_u=ub_u, rows=rows, w_l1=50.0, w_l2=100.0)


def cvxpy_reference(p, terminal=None):
    N = len(p["A_seq"])
    n_x = p["A_seq"][0].shape[0]
    n_u = p["B_seq"][0].shape[1]
    xs = [cp.Variable(n_x) for _ in range(N + 1)]
    us = [cp.Variable(n_u) for _ in range(N)]
    ss = [cp.Variable(nonneg=True) for _ in p["rows"]]
    cons = [xs[0] == p["x0"]]
    for k in range(N):
        cons.append(xs[k + 1] == p["A_seq"][k] @ xs[k]
                    + p["B_seq"][k] @ us[k] + p["r_seq"][k])
        if np.all(np.isfinite(p["ub_u"])):
            cons += [us[k] <= p["ub_u"], us[k] >= p["lb_u"]]
        if np.all(np.isfinite(p["ub_x"])):
            cons += [xs[k + 1] <= p["ub_x"], xs[k + 1] >= p["lb_x"]]
    obj = 0
    for k in range(N):
        W = p["QN"] if k + 1 == N else p["Q"]
        obj += cp.quad_form(xs[k + 1] - p["x_ref"][k + 1], W)
        obj += cp.quad_form(us[k] - p["u_ref"][k], p["R"])
    for i, rr in enumerate(p["rows"]):
        cons.append(rr.coef @ xs[rr.stage] - ss[i] <= rr.rhs)
        obj += p["w_l1"] * ss[i] + p["w_l2"] * cp.square(ss[i])
    if terminal is not None:
        for ti, tv in zip(*terminal):
            cons.append(xs[N][ti] == tv)
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL)
    assert prob.status == cp.OPTIMAL
    return np.array([x.value for x in xs]), np.array([u.value for u in us])


def test_matches_reference_on_random_problems(rng):
    for _ in range(10):
        p = random_problem(rng)
        sol = StructuredQp(**p).solve()
        xs_ref, us_ref = cvxpy_reference(p)
        assert np.abs(sol.xs - xs_ref).max() <= 1e-5
        assert np.abs(sol.us - us_ref).max() <= 1e-5


def test_banded_and_dense_backends_agree(rng):
    for _ in range(5):
        p = random_problem(rng, N=4)
        a = StructuredQp(**p, backend="banded").solve()
        b = StructuredQp(**p, backend="dense").solve()
        assert np.abs(a.xs - b.xs).max() <= 1e-7
        assert np.abs(a.us - b.us).max() <= 1e-7


def test_equality_only_path(rng):
    # no boxes, no rows: solved in one factorization, matches the
    # reference equality-constrained minimizer
    p = random_problem(rng, n_rows=0, finite_bounds=False)
    sol = StructuredQp(**p).solve()
    assert sol.ipm_iters == 0
    xs_ref, us_ref = cvxpy_reference(p)
    assert np.abs(sol.xs - xs_ref).max() <= 1e-7
    assert np.abs(sol.us - us_ref).max() <= 1e-7


def test_terminal_rows_pin_final_state(rng):
    p = random_problem(rng, n_rows=0)
    terminal = (np.array([0, 2]), np.array([0.25, -0.5]))
    sol = StructuredQp(**p, terminal=terminal).solve()
    assert np.isclose(sol.xs[-1][0], 0.25, atol=1e-7)
    assert np.isclose(sol.xs[-1][2], -0.5, atol=1e-7)
    xs_ref, us_ref = cvxpy_reference(p, terminal=terminal)
    assert np.abs(sol.xs - xs_ref).max() <= 1e-5


def test_dynamics_hold_exactly(rng):
    p = random_problem(rng)
    sol = StructuredQp(**p).solve()
    for k in range(len(p["A_seq"])):
        pred = p["A_seq"][k] @ sol.xs[k] + p["B_seq"][k] @ sol.us[k] + p["r_seq"][k]
        assert np.abs(sol.xs[k + 1] - pred).max() <= 1e-7


def test_loose_rows_leave_zero_slack(rng):
    p = random_problem(rng, n_rows=0)
    base = StructuredQp(**p).solve()
    loose = [QpRow(stage=2, coef=np.array([1.0, 0.0, 0.0]), rhs=100.0)]
    p2 = dict(p, rows=loose)
    sol = StructuredQp(**p2).solve()
    assert sol.slacks.max() <= 1e-7
    assert sol.row_duals.max() <= 1e-6
    assert np.abs(sol.xs - base.xs).max() <= 1e-5


def test_tight_row_forces_slack(rng):
    # an unsatisfiable row (rhs far below reachable values) must be
    # absorbed by its slack, never make the QP infeasible
    p = random_problem(rng, n_rows=0)
    rows = [QpRow(stage=1, coef=np.array([1.0, 0.0, 0.0]), rhs=-50.0)]
    p2 = dict(p, rows=rows)
    sol = StructuredQp(**p2).solve()
    assert sol.slacks[0] > 1.0
    x1 = sol.xs[1]
    assert x1[0] - sol.slacks[0] <= -50.0 + 1e-6


def test_inconsistent_bounds_raise():
    n_x, n_u, N = 2, 1, 2
    with pytest.raises(QpFailure):
        StructuredQp([np.eye(n_x)] * N, [np.ones((n_x, n_u))] * N,
                     [np.zeros(n_x)] * N, np.zeros(n_x),
                     np.eye(n_x), np.eye(n_u), np.eye(n_x),
                     np.zeros((N + 1, n_x)), np.zeros((N, n_u)),
                     lb_x=np.full(n_x, np.inf), ub_x=np.full(n_x, -np.inf),
                     lb_u=np.full(n_u, -1.0), ub_u=np.full(n_u, 1.0),
                     rows=[], w_l1=1.0, w_l2=1.0)


def test_row_stage_validation(rng):
    p = random_problem(rng, n_rows=0)
    bad = [QpRow(stage=0, coef=np.ones(3), rhs=0.0)]
    with pytest.raises(ValueError):
        StructuredQp(**dict(p, rows=bad))


def test_kkt_residual_reported_small(rng):
    p = random_problem(rng)
    sol = StructuredQp(**p).solve()
    assert sol.kkt_residual <= 1e-6
