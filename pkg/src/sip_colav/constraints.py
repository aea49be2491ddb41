"""Collision-constraint evaluation and linearization.

Constraint values are violation-positive: h = pad_radius - distance, so
h <= 0 means the padded footprint clears the obstacle.  Gradients are the
partial derivatives at the fixed lower-level maximizer; at a nondegenerate
maximizer these equal the total derivatives of the re-minimized distance,
so no maximizer sensitivities are needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distance_field import ObstacleField
from .errors import PenetrationCase
from .geometry import PaddedPolygon, Pose2, rot2
from .lower_level import NominalMaximizer, RobustMaximizer, solve_nominal, solve_robust

_CROSS = np.array([[0.0, -1.0], [1.0, 0.0]])
_DIST_EPS = 1e-12


@dataclass
class Jacobians2D:
    """Body-twist selector Jacobians for a planar state (px, py, theta, ...)."""

    J_t: np.ndarray    # (2, n_x) body-frame translation rows
    J_r: np.ndarray    # (n_x,) heading row
    dpc_dx: np.ndarray  # (2, n_x) world position rows


def jacobians_2d(x) -> Jacobians2D:
    """J_t = R(theta)^T d p_c/d x and the heading selector J_r.

    With this choice R J_t equals d p_c/d x exactly, so a body-frame
    translation perturbation maps to the corresponding world translation.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    dpc = np.zeros((2, n))
    dpc[0, 0] = 1.0
    dpc[1, 1] = 1.0
    J_t = rot2(x[2]).T @ dpc
    J_r = np.zeros(n)
    J_r[2] = 1.0
    return Jacobians2D(J_t, J_r, dpc)


@dataclass
class LinearizedConstraint:
    """One linearized collision row: value + grad_x . (x - x_lin) + backoff <= 0
    (slacked in the QP)."""

    value: float
    grad_x: np.ndarray
    x_lin: np.ndarray
    backoff: float
    obstacle_index: int
    stage: int

    def eval_at(self, x) -> float:
        return self.value + float(self.grad_x @ (np.asarray(x, dtype=float) - self.x_lin))


def _grad_from_eta(eta: np.ndarray, gamma: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Gradient of (pad_radius - |eta(x)|) at a fixed maximizer gamma."""
    n = x.shape[0]
    R = rot2(x[2])
    deta = np.zeros((2, n))
    deta[0, 0] = 1.0
    deta[1, 1] = 1.0
    deta[:, 2] = R @ (_CROSS @ gamma)
    unit = eta / np.linalg.norm(eta)
    return -(unit @ deta)


def eval_nominal(poly: PaddedPolygon, x, p_obs) -> tuple[float, np.ndarray, NominalMaximizer]:
    """Nominal constraint value and state gradient for one obstacle."""
    x = np.asarray(x, dtype=float)
    pose = Pose2.from_state(x)
    mx = solve_nominal(poly, pose, p_obs)
    if mx.distance < _DIST_EPS:
        raise PenetrationCase("obstacle touches the footprint polygon")
    eta = pose.rotation() @ (mx.gamma_shp - mx.q)
    grad = _grad_from_eta(eta, mx.gamma_shp, x)
    return poly.pad_radius - mx.distance, grad, mx


def eval_robust(poly: PaddedPolygon, x, p_obs,
                sigma_sqrt: np.ndarray) -> tuple[float, np.ndarray, RobustMaximizer]:
    """Worst-case constraint value and gradient with the frozen Sigma^(1/2).

    The translational uncertainty seen by the constraint is the ellipsoid
    E(0, J_t Sigma J_t^T); the heading part is covered separately by
    rotational_backoff.
    """
    x = np.asarray(x, dtype=float)
    pose = Pose2.from_state(x)
    jac = jacobians_2d(x)
    M = jac.J_t @ np.asarray(sigma_sqrt, dtype=float)
    mx = solve_robust(poly, pose, p_obs, M @ M.T, trans_map=M)
    if mx.distance < _DIST_EPS:
        raise PenetrationCase("uncertainty ellipsoid touches the footprint")
    eta = pose.rotation() @ (mx.gamma_shp + mx.d_t - mx.q)
    grad = _grad_from_eta(eta, mx.gamma_shp, x)
    return poly.pad_radius - mx.distance, grad, mx


def eval_penetration(poly: PaddedPolygon, x, p_obs,
                     sigma_sqrt=None) -> tuple[float, np.ndarray]:
    """Recovery row for an obstacle point inside the footprint polygon.

    The point-distance constraint is degenerate there (zero distance, no
    gradient), so the least-penetrated edge's supporting halfplane stands
    in: requiring plane distance >= pad_radius implies the true clearance,
    because the polygon lies inside the halfplane.  With sigma_sqrt the
    plane distance is reduced by the ellipsoid's extent along the normal.
    """
    x = np.asarray(x, dtype=float)
    pose = Pose2.from_state(x)
    p_b = pose.to_body(p_obs)
    viol = poly.A @ p_b + poly.b
    e = int(np.argmax(viol))
    n_b = poly.A[e]
    s = float(viol[e])
    if sigma_sqrt is not None:
        jac = jacobians_2d(x)
        M = jac.J_t @ np.asarray(sigma_sqrt, dtype=float)
        s -= float(np.linalg.norm(M.T @ n_b))
    # s(x) = n.(R^T (p_o - p)) + b_e; h = pad - s
    n = x.shape[0]
    R = pose.rotation()
    r = np.asarray(p_obs, dtype=float) - pose.position
    ds = np.zeros(n)
    ds[0:2] = -(R @ n_b)
    ds[2] = -float(n_b @ (_CROSS @ (R.T @ r)))
    return poly.pad_radius - s, -ds


def rotational_backoff(poly: PaddedPolygon, Sigma, j_r=None) -> float:
    """Heading-uncertainty margin: sqrt(J_r Sigma J_r^T) * max vertex norm."""
    Sigma = np.asarray(Sigma, dtype=float)
    if j_r is None:
        j_r = np.zeros(Sigma.shape[0])
        j_r[2] = 1.0
    var = float(j_r @ Sigma @ j_r)
    return float(np.sqrt(max(var, 0.0)) * poly.max_vertex_norm())


def affine_backoff(grad, Sigma) -> float:
    """Margin sqrt(grad Sigma grad^T) for an affine constraint row."""
    grad = np.asarray(grad, dtype=float)
    var = float(grad @ np.asarray(Sigma, dtype=float) @ grad)
    return float(np.sqrt(max(var, 0.0)))


def _sd_cell_gradient(fld: ObstacleField, ix: int, iy: int) -> np.ndarray:
    """Central-difference gradient of the signed-distance grid at a cell."""
    nx, ny = fld.sd_grid.shape
    x0, x1 = max(ix - 1, 0), min(ix + 1, nx - 1)
    y0, y1 = max(iy - 1, 0), min(iy + 1, ny - 1)
    gx = (fld.sd_grid[x1, iy] - fld.sd_grid[x0, iy]) / ((x1 - x0) * fld.resolution)
    gy = (fld.sd_grid[ix, y1] - fld.sd_grid[ix, y0]) / ((y1 - y0) * fld.resolution)
    return np.array([gx, gy])


def fallback_rows(fld: ObstacleField, poly: PaddedPolygon, x, boundary_pts,
                  stage: int, level: float | None = None) -> list[LinearizedConstraint]:
    """Recovery rows for a penetrating pose, built from the signed-distance
    grid instead of individual obstacle points.

    Each collected boundary point gamma must satisfy sd(p_c + R gamma) >=
    level (default 5 * resolution), linearized through the grid gradient.
    """
    x = np.asarray(x, dtype=float)
    pose = Pose2.from_state(x)
    if level is None:
        level = 5.0 * fld.resolution
    n = x.shape[0]
    R = pose.rotation()
    rows = []
    for gamma in np.atleast_2d(boundary_pts):
        p = pose.to_world(gamma)
        ix, iy = fld.cell_index(p)
        sd = float(fld.sd_grid[ix, iy])
        gsd = _sd_cell_gradient(fld, ix, iy)
        if np.linalg.norm(gsd) < 1e-6:
            # thin obstacles zero out the central difference at their
            # symmetry cells; such a row cannot push the pose anywhere
            continue
        drho = np.zeros((2, n))
        drho[0, 0] = 1.0
        drho[1, 1] = 1.0
        drho[:, 2] = R @ (_CROSS @ gamma)
        grad = -(gsd @ drho)
        rows.append(LinearizedConstraint(
            value=level - sd, grad_x=grad, x_lin=x.copy(), backoff=0.0,
            obstacle_index=-1, stage=stage))
    return rows
