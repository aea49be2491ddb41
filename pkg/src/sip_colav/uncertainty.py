"""Uncertainty-ellipsoid propagation along a nominal trajectory.

State uncertainty is carried as covariance-shaped matrices Sigma_k whose
unit-sublevel ellipsoids E(x_k, Sigma_k) bound the disturbed state.  For a
disturbance sequence constrained to the joint ellipsoid of the per-stage
W_k blocks, the linear-system propagation below is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, IndefiniteBeyondTolerance, NotSymmetric

SYM_TOL = 1e-8


def propagate(A_seq, C_seq, Sigma0, W_seq) -> list[np.ndarray]:
    """Sigma_{k+1} = A_k Sigma_k A_k^T + C_k W_k C_k^T, re-symmetrized.

    Returns [Sigma_0, ..., Sigma_N].  Each result is forced symmetric via
    (S + S^T)/2 to stop drift over long horizons.
    """
    Sigma = np.asarray(Sigma0, dtype=float)
    n = Sigma.shape[0]
    if Sigma.shape != (n, n):
        raise DimensionMismatch("Sigma0 must be square")
    out = [0.5 * (Sigma + Sigma.T)]
    for A, C, W in zip(A_seq, C_seq, W_seq):
        A = np.asarray(A, dtype=float)
        C = np.asarray(C, dtype=float)
        W = np.asarray(W, dtype=float)
        if A.shape != (n, n) or C.shape[0] != n or W.shape != (C.shape[1],) * 2:
            raise DimensionMismatch("propagation matrices disagree on sizes")
        Sigma = A @ out[-1] @ A.T + C @ W @ C.T
        out.append(0.5 * (Sigma + Sigma.T))
    return out


def psd_sqrt(M, tol: float = SYM_TOL) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in [-tol, 0) are clamped to zero; eigenvalues below -tol
    raise IndefiniteBeyondTolerance.  Asymmetry beyond tol raises
    NotSymmetric.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch("psd_sqrt needs a square matrix")
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M - M.T).max() > tol * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    if vals.min() < -tol * scale:
        raise IndefiniteBeyondTolerance(
            f"eigenvalue {vals.min():.3e} below -{tol * scale:.1e}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


@dataclass
class UncertaintyTube:
    """Initial covariance-shaped set and per-stage disturbance shape.

    W may be a full per-stage matrix or a scalar understood as the largest
    eigenvalue per 50 ms (scaled linearly to the stage length).
    """

    Sigma0: np.ndarray
    W: object

    def __post_init__(self):
        self.Sigma0 = np.asarray(self.Sigma0, dtype=float)

    def W_matrix(self, dt: float, n_x: int) -> np.ndarray:
        return disturbance_matrix(self.W, dt, n_x)

    @classmethod
    def zero(cls, n_x: int) -> "UncertaintyTube":
        return cls(np.zeros((n_x, n_x)), 0.0)


def disturbance_matrix(spec, dt: float, n_x: int) -> np.ndarray:
    """Per-stage disturbance shape W_k for a stage of length dt.

    A scalar spec is the largest eigenvalue per 50 ms and scales linearly
    with dt, giving W = spec * (dt / 0.05) * I.  A full matrix spec is used
    as-is (already per-stage).
    """
    spec = np.asarray(spec, dtype=float)
    if spec.ndim == 0:
        return float(spec) * (dt / 0.05) * np.eye(n_x)
    if spec.shape != (n_x, n_x):
        raise DimensionMismatch(f"W must be scalar or ({n_x}, {n_x})")
    return spec
