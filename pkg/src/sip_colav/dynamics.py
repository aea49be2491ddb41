"""Differential-drive robot model and sensitivity-carrying integrator.

State layout: x = (px, py, theta, v_cmd, omega_cmd, nu_1..nu_{n_nu});
input u = (a, alpha) commands the rates of (v_cmd, omega_cmd).  The realized
body velocities are (v, omega) = C_nu nu + D_nu (v_cmd, omega_cmd), with
actuator states nu following nu_dot = A_nu nu + B_nu (v_cmd, omega_cmd).
A kinematic-only model has n_nu = 0 and D_nu = I.

The published kinematics place sin(theta) on px_dot and cos(theta) on
py_dot; that placement is kept verbatim as the default.  Set
heading_convention="standard" for the conventional cos/sin pairing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch


@dataclass
class DiffDriveModel:
    """Differential-drive model with optional linear actuator dynamics."""

    A_nu: np.ndarray
    B_nu: np.ndarray
    C_nu: np.ndarray
    D_nu: np.ndarray
    heading_convention: str = "paper"

    def __post_init__(self):
        self.A_nu = np.atleast_2d(np.asarray(self.A_nu, dtype=float))
        self.B_nu = np.atleast_2d(np.asarray(self.B_nu, dtype=float))
        self.C_nu = np.atleast_2d(np.asarray(self.C_nu, dtype=float))
        self.D_nu = np.atleast_2d(np.asarray(self.D_nu, dtype=float))
        n_nu = self.n_nu
        if n_nu == 0:
            self.A_nu = self.A_nu.reshape(0, 0)
            self.B_nu = self.B_nu.reshape(0, 2)
            self.C_nu = self.C_nu.reshape(2, 0)
        if self.A_nu.shape != (n_nu, n_nu) or self.B_nu.shape != (n_nu, 2):
            raise DimensionMismatch("actuator state matrices disagree on n_nu")
        if self.C_nu.shape != (2, n_nu) or self.D_nu.shape != (2, 2):
            raise DimensionMismatch("velocity output matrices must be 2-row")
        if self.heading_convention not in ("paper", "standard"):
            raise ValueError("heading_convention must be 'paper' or 'standard'")

    @classmethod
    def kinematic(cls, heading_convention: str = "paper") -> "DiffDriveModel":
        """Velocity commands realized instantly: n_nu = 0, D_nu = I."""
        z = np.zeros((0, 0))
        return cls(z, np.zeros((0, 2)), np.zeros((2, 0)), np.eye(2),
                   heading_convention=heading_convention)

    @classmethod
    def first_order_lag(cls, tau_v: float, tau_omega: float,
                        heading_convention: str = "paper") -> "DiffDriveModel":
        """Realized velocities lag the commands with the given time constants."""
        A = np.diag([-1.0 / tau_v, -1.0 / tau_omega])
        B = np.diag([1.0 / tau_v, 1.0 / tau_omega])
        return cls(A, B, np.eye(2), np.zeros((2, 2)),
                   heading_convention=heading_convention)

    @property
    def n_nu(self) -> int:
        return self.C_nu.shape[1] if self.C_nu.ndim == 2 else 0

    @property
    def n_x(self) -> int:
        return 5 + self.n_nu

    @property
    def n_u(self) -> int:
        return 2

    @property
    def kinematic_only(self) -> bool:
        return self.n_nu == 0

    def direction(self, theta: float) -> np.ndarray:
        """World-frame unit direction assigned to heading theta."""
        if self.heading_convention == "paper":
            return np.array([np.sin(theta), np.cos(theta)])
        return np.array([np.cos(theta), np.sin(theta)])

    def direction_derivative(self, theta: float) -> np.ndarray:
        if self.heading_convention == "paper":
            return np.array([np.cos(theta), -np.sin(theta)])
        return np.array([-np.sin(theta), np.cos(theta)])

    def heading_from_tangent(self, tangent) -> float:
        """Heading whose direction() matches a world-frame tangent vector."""
        tx, ty = float(tangent[0]), float(tangent[1])
        if self.heading_convention == "paper":
            return float(np.arctan2(tx, ty))
        return float(np.arctan2(ty, tx))

    def realized_velocity(self, x: np.ndarray) -> np.ndarray:
        """Realized (v, omega) for a state vector."""
        cmd = x[3:5]
        nu = x[5:]
        return self.C_nu @ nu + self.D_nu @ cmd


def ode_rhs(model: DiffDriveModel, x, u) -> np.ndarray:
    """Continuous-time state derivative f(x, u)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (model.n_x,):
        raise DimensionMismatch(f"state must have length {model.n_x}")
    if u.shape != (2,):
        raise DimensionMismatch("input must have length 2")
    v, omega = model.realized_velocity(x)
    out = np.empty(model.n_x)
    out[0:2] = v * model.direction(x[2])
    out[2] = omega
    out[3:5] = u
    if model.n_nu:
        out[5:] = model.A_nu @ x[5:] + model.B_nu @ x[3:5]
    return out


def _jac_x(model: DiffDriveModel, x: np.ndarray) -> np.ndarray:
    """d f / d x at (x, u); the input enters f affinely so u is not needed."""
    n = model.n_x
    F = np.zeros((n, n))
    v, _ = model.realized_velocity(x)
    d = model.direction(x[2])
    dd = model.direction_derivative(x[2])
    # position rows: v depends on (v_cmd, omega_cmd) and nu
    F[0:2, 2] = v * dd
    F[0:2, 3:5] = np.outer(d, model.D_nu[0])
    F[2, 3:5] = model.D_nu[1]
    if model.n_nu:
        F[0:2, 5:] = np.outer(d, model.C_nu[0])
        F[2, 5:] = model.C_nu[1]
        F[5:, 5:] = model.A_nu
        F[5:, 3:5] = model.B_nu
    return F


def _jac_u(model: DiffDriveModel) -> np.ndarray:
    G = np.zeros((model.n_x, 2))
    G[3, 0] = 1.0
    G[4, 1] = 1.0
    return G


@dataclass
class DiscreteStep:
    """One RK4 step with forward sensitivities.

    A = d x_next / d x, B = d x_next / d u, C = d x_next / d w for the
    additive disturbance channel x_dot = f(x, u) + w.
    """

    x_next: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


def integrate(model: DiffDriveModel, x, u, w, dt: float) -> DiscreteStep:
    """Single RK4 step of x_dot = f(x, u) + w with w held constant.

    Sensitivities are propagated in forward mode through the same RK4
    stencil, so A, B, C are the exact Jacobians of the discrete map.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    n = model.n_x
    w = np.zeros(n) if w is None else np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise DimensionMismatch(f"disturbance must have length {n}")

    k1 = ode_rhs(model, x, u) + w
    x2 = x + 0.5 * dt * k1
    k2 = ode_rhs(model, x2, u) + w
    x3 = x + 0.5 * dt * k2
    k3 = ode_rhs(model, x3, u) + w
    x4 = x + dt * k3
    k4 = ode_rhs(model, x4, u) + w
    x_next = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    eye = np.eye(n)
    F1, F2, F3, F4 = (_jac_x(model, xi) for xi in (x, x2, x3, x4))
    G = _jac_u(model)

    k1x = F1
    k2x = F2 @ (eye + 0.5 * dt * k1x)
    k3x = F3 @ (eye + 0.5 * dt * k2x)
    k4x = F4 @ (eye + dt * k3x)
    A = eye + (dt / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)

    k1u = G
    k2u = F2 @ (0.5 * dt * k1u) + G
    k3u = F3 @ (0.5 * dt * k2u) + G
    k4u = F4 @ (dt * k3u) + G
    B = (dt / 6.0) * (k1u + 2 * k2u + 2 * k3u + k4u)

    k1w = eye
    k2w = F2 @ (0.5 * dt * k1w) + eye
    k3w = F3 @ (0.5 * dt * k2w) + eye
    k4w = F4 @ (dt * k3w) + eye
    C = (dt / 6.0) * (k1w + 2 * k2w + 2 * k3w + k4w)

    return DiscreteStep(x_next, A, B, C)


def rollout(model: DiffDriveModel, x0, inputs, dt: float) -> np.ndarray:
    """Forward simulation: stack of states (len(inputs)+1, n_x)."""
    x = np.asarray(x0, dtype=float)
    out = [x]
    for u in np.atleast_2d(inputs):
        x = integrate(model, x, u, None, dt).x_next
        out.append(x)
    return np.vstack(out)
