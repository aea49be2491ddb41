"""Covariance propagation identities and the matrix square root."""

import numpy as np
import pytest

from sip_colav import (DiffDriveModel, IndefiniteBeyondTolerance,
                       NotSymmetric, UncertaintyTube, integrate, propagate,
                       psd_sqrt)
from sip_colav.uncertainty import disturbance_matrix


def random_psd(rng, n, scale=1.0):
    M = rng.normal(size=(n, n))
    return scale * (M @ M.T) / n


def test_identity_dynamics_accumulates_linearly(rng):
    # A = I, C = I: Sigma_k = Sigma_0 + k W exactly
    n, N = 5, 12
    S0 = random_psd(rng, n)
    W = random_psd(rng, n, 0.1)
    seq = propagate([np.eye(n)] * N, [np.eye(n)] * N, S0, [W] * N)
    for k in range(N + 1):
        np.testing.assert_allclose(seq[k], S0 + k * W, atol=1e-12)


def test_propagation_preserves_symmetry(rng):
    n, N = 5, 30
    A = [rng.normal(size=(n, n)) for _ in range(N)]
    C = [rng.normal(size=(n, n)) for _ in range(N)]
    seq = propagate(A, C, random_psd(rng, n), [random_psd(rng, n)] * N)
    for S in seq:
        np.testing.assert_allclose(S, S.T, atol=1e-13 * max(1, abs(S).max()))
        # PSD up to roundoff at the matrix's own scale
        assert np.linalg.eigvalsh(S).min() >= -1e-12 * max(1, abs(S).max())


def test_propagation_monotone_in_disturbance(rng):
    # Sigma_{k+1} - A Sigma_k A^T equals the injected PSD term
    n, N = 4, 10
    A = [rng.normal(size=(n, n)) * 0.5 for _ in range(N)]
    C = [rng.normal(size=(n, n)) for _ in range(N)]
    W = [random_psd(rng, n, 0.2) for _ in range(N)]
    seq = propagate(A, C, random_psd(rng, n), W)
    for k in range(N):
        gain = seq[k + 1] - A[k] @ seq[k] @ A[k].T
        assert np.linalg.eigvalsh(0.5 * (gain + gain.T)).min() >= -1e-12


def test_psd_sqrt_squares_back(rng):
    for _ in range(20):
        S = random_psd(rng, 5)
        R = psd_sqrt(S)
        np.testing.assert_allclose(R @ R.T, S, atol=1e-10)


def test_psd_sqrt_rejects_bad_matrices(rng):
    with pytest.raises(NotSymmetric):
        psd_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(IndefiniteBeyondTolerance):
        psd_sqrt(np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_sqrt_clips_roundoff_negatives():
    # tiny negative eigenvalues from roundoff are clipped, not fatal
    S = np.diag([1.0, -1e-14])
    R = psd_sqrt(S)
    np.testing.assert_allclose(R @ R.T, np.diag([1.0, 0.0]), atol=1e-12)


def test_scalar_disturbance_scales_with_dt():
    # scalar spec is the largest eigenvalue per 50 ms
    W = disturbance_matrix(2.5e-4, 0.05, 5)
    np.testing.assert_allclose(W, 2.5e-4 * np.eye(5), atol=1e-18)
    W2 = disturbance_matrix(2.5e-4, 0.2, 5)
    np.testing.assert_allclose(W2, 1e-3 * np.eye(5), atol=1e-18)
    tube = UncertaintyTube(np.zeros((5, 5)), 2.5e-4)
    np.testing.assert_allclose(tube.W_matrix(0.05, 5), W)


def test_linear_propagation_contains_impulse_responses(rng):
    """Any single-stage boundary disturbance stays inside every later set.

    The tube aggregates per-stage disturbance covariances, so the response
    to one disturbance pulse w_j on the boundary of E(0, W) must satisfy
    the ellipsoid inequality of E(x_k, Sigma_k) for all k > j up to 1e-9.
    (Simultaneous worst-case pulses at every stage can leave the tube; the
    recursion sums covariances, not support functions.)
    """
    n, N, dt = 5, 8, 0.1
    # linear system: double-integrator pair plus passthrough states
    A_c = np.zeros((n, n))
    A_c[0, 3] = 1.0
    A_c[1, 4] = 1.0
    W = 1e-4 * np.eye(n)
    Ad = np.eye(n) + dt * A_c          # A_c is nilpotent, the series ends
    Cd = dt * np.eye(n)
    Sigma = propagate([Ad] * N, [Cd] * N, np.zeros((n, n)), [W] * N)

    sqrtW = psd_sqrt(W)
    for trial in range(1000):
        g = rng.standard_normal(n)
        g /= np.linalg.norm(g)
        w = sqrtW @ g                      # on the boundary of E(0, W)
        j = int(rng.integers(0, N))        # pulse stage
        x = np.zeros(n)
        xs = [x]
        for k in range(N):
            x = Ad @ x + (Cd @ w if k == j else 0.0)
            xs.append(x)
        for k in range(j + 1, N + 1):
            S = Sigma[k]
            val = xs[k] @ np.linalg.pinv(S, rcond=1e-12) @ xs[k]
            assert val <= 1.0 + 1e-9


def test_rk4_step_carries_disturbance_channel():
    model = DiffDriveModel.kinematic()
    step = integrate(model, np.zeros(5), np.zeros(2), None, 0.05)
    assert step.C.shape == (5, 5)
    # constant disturbance integrates like dt * w at leading order; the
    # O(dt^2) coupling terms stay below dt^2
    np.testing.assert_allclose(np.diag(step.C), 0.05, atol=1e-6)
    off = step.C - np.diag(np.diag(step.C))
    assert np.abs(off).max() <= 0.05 ** 2
