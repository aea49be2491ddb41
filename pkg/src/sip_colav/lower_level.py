"""Lower-level maximizers of the collision constraint.

For one obstacle point and one pose, the infinite family of constraints
over the footprint reduces to the single most-violating footprint point.
Nominal form: closest polygon point to the obstacle (a closed-form
projection).  Robust form: closest pair between the polygon and an
uncertainty ellipsoid around the obstacle, found by alternating exact
projections onto the two convex sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence
from .geometry import PaddedPolygon, Pose2, project_point_onto_polygon

ALT_MAX = 200
ALT_STEP_TOL = 1e-10
ALT_FAIL_TOL = 1e-8


@dataclass
class NominalMaximizer:
    """Worst footprint point for one obstacle under the nominal constraint."""

    gamma_shp: np.ndarray   # body-frame polygon point
    distance: float         # polygon-to-obstacle distance (>= 0)
    q: np.ndarray           # obstacle in body frame


@dataclass
class RobustMaximizer:
    """Worst (footprint point, disturbance direction) pair."""

    gamma_shp: np.ndarray
    d_t: np.ndarray         # body-frame translation disturbance on the ellipsoid
    distance: float         # worst-case distance (<= nominal)
    gamma_tn: np.ndarray | None
    alternations: int
    q: np.ndarray


def solve_nominal(poly: PaddedPolygon, pose: Pose2, p_obs) -> NominalMaximizer:
    """Exact maximizer of the nominal constraint for one obstacle point."""
    q = pose.to_body(p_obs)
    gamma, dist = project_point_onto_polygon(poly, q)
    return NominalMaximizer(gamma, dist, q)


def _ellipsoid_projection(y: np.ndarray, axes: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Euclidean projection of y onto the ellipsoid {V diag(axes) s : |s|<=1}.

    axes are the semi-axis lengths (eigenvalue square roots, ascending) and
    V the matching eigenvector columns.  Degenerate axes collapse the
    problem onto the affine hull.
    """
    yh = V.T @ y
    a = axes.copy()
    amax = a.max()
    if amax <= 0.0:
        return np.zeros_like(y)
    live = a > 1e-14 * amax
    yl = np.where(live, yh, 0.0)
    s = yl / np.where(live, a, 1.0)
    if np.sum(s * s) <= 1.0:
        return V @ yl
    # scalar secular equation for the Lagrange multiplier mu > 0:
    #   sum_i (a_i^2 yh_i / (a_i^2 + mu))^2 / a_i^2 = 1
    a2 = np.where(live, a * a, 0.0)
    ay2 = a2 * yl * yl

    def f(mu):
        return float(np.sum(ay2 / (a2 + mu) ** 2)) - 1.0

    lo_mu, hi_mu = 0.0, float(np.linalg.norm(a * yl))
    mu = 0.5 * hi_mu
    for _ in range(128):
        val = f(mu)
        if val > 0:
            lo_mu = mu
        else:
            hi_mu = mu
        deriv = float(np.sum(-2.0 * ay2 / (a2 + mu) ** 3))
        step = -val / deriv if deriv != 0 else 0.0
        nxt = mu + step
        if not (lo_mu < nxt < hi_mu):
            nxt = 0.5 * (lo_mu + hi_mu)
        if abs(nxt - mu) <= 1e-16 * max(1.0, mu) and abs(val) < 1e-13:
            mu = nxt
            break
        mu = nxt
    dproj = np.where(live, a2 * yl / (a2 + mu), 0.0)
    return V @ dproj


def solve_robust(poly: PaddedPolygon, pose: Pose2, p_obs, P_t,
                 trans_map: np.ndarray | None = None) -> RobustMaximizer:
    """Worst-case maximizer under translational uncertainty E(0, P_t).

    Alternates exact projections between the polygon and the (body-frame)
    ellipsoid until the iterate moves less than 1e-10, raising
    NoConvergence only if the final step still exceeds 1e-8 after 200
    alternations.  When trans_map = J_t Sigma^(1/2) is given, the returned
    gamma_tn is its minimum-norm preimage of the worst disturbance.
    """
    q = pose.to_body(p_obs)
    P_t = np.asarray(P_t, dtype=float)
    vals, V = np.linalg.eigh(0.5 * (P_t + P_t.T))
    axes = np.sqrt(np.clip(vals, 0.0, None))

    gamma, _ = project_point_onto_polygon(poly, q)
    d = np.zeros(2)
    obj_prev = np.inf
    step = np.inf
    n_alt = 0
    for n_alt in range(1, ALT_MAX + 1):
        d_new = _ellipsoid_projection(q - gamma, axes, V)
        gamma_new, _ = project_point_onto_polygon(poly, q - d_new)
        step = max(np.abs(d_new - d).max(), np.abs(gamma_new - gamma).max())
        gamma, d = gamma_new, d_new
        if __debug__:
            obj = float(np.linalg.norm(gamma + d - q))
            assert obj <= obj_prev + 1e-12, "alternation objective increased"
            obj_prev = obj
        if step < ALT_STEP_TOL:
            break
    else:
        if step >= ALT_FAIL_TOL:
            raise NoConvergence(
                f"alternating projections stalled at step {step:.3e}")
    dist = float(np.linalg.norm(gamma + d - q))
    gamma_tn = None
    if trans_map is not None:
        gamma_tn = np.linalg.pinv(np.asarray(trans_map, dtype=float)) @ d
    return RobustMaximizer(gamma, d, dist, gamma_tn, n_alt, q)
