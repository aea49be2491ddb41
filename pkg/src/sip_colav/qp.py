"""Structured convex QP for one SQP iteration of the trajectory OCP.

Decision variables are the stacked inputs, states, and collision slacks
(u_0, x_1, s_1, u_1, x_2, s_2, ..., x_N, s_N); the initial state is fixed
and eliminated.  Dynamics enter as stage-local equality constraints, box
bounds are hard, and collision rows are softened through slacks with an
L1 + L2 penalty, so only the hard bounds can make the QP infeasible.

The KKT systems of the primal-dual interior-point iterations are solved
with a banded LU factorization after interleaving equality multipliers
with their stages, which keeps the bandwidth independent of the horizon
and the per-iteration cost linear in N.  A dense backend (same iteration,
dense LU) exists for small-horizon cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.linalg import lapack

from .errors import QpFailure

_REG = 1e-11
_MAX_IPM = 60
_TOL_RES = 1e-9
_TOL_MU = 1e-10
_ACCEPT_RES = 1e-6
_STALL_LIMIT = 15


@dataclass
class QpRow:
    """One soft inequality coef . x_stage <= rhs (slacked)."""

    stage: int
    coef: np.ndarray
    rhs: float


@dataclass
class QpSolution:
    xs: np.ndarray
    us: np.ndarray
    slacks: np.ndarray        # one entry per QpRow, in input order
    row_duals: np.ndarray     # multipliers of the slacked rows
    kkt_residual: float
    ipm_iters: int
    objective: float


class StructuredQp:
    """Assembles and solves one tracking QP with slacked collision rows."""

    def __init__(self, A_seq, B_seq, r_seq, x0, Q, R, QN, x_ref, u_ref,
                 lb_x, ub_x, lb_u, ub_u, rows, w_l1, w_l2,
                 terminal=None, backend="banded"):
        self.N = len(A_seq)
        self.n_x = A_seq[0].shape[0]
        self.n_u = B_seq[0].shape[1]
        self.backend = backend
        if backend not in ("banded", "dense"):
            raise ValueError("backend must be 'banded' or 'dense'")
        N, n_x, n_u = self.N, self.n_x, self.n_u

        lb_u = np.asarray(lb_u, dtype=float)
        ub_u = np.asarray(ub_u, dtype=float)
        lb_x = np.asarray(lb_x, dtype=float)
        ub_x = np.asarray(ub_x, dtype=float)
        if lb_x.ndim == 1:
            lb_x = np.tile(lb_x, (N + 1, 1))
        if ub_x.ndim == 1:
            ub_x = np.tile(ub_x, (N + 1, 1))
        if np.any(lb_u > ub_u) or np.any(lb_x[1:] > ub_x[1:]):
            raise QpFailure("hard box bounds are inconsistent (lb > ub)")

        rows = list(rows)
        self.rows = rows
        self.x0 = np.asarray(x0, dtype=float)
        for rr in rows:
            if not (1 <= rr.stage <= N):
                raise ValueError("collision rows must sit on stages 1..N")

        # natural variable offsets
        self.u_off = np.zeros(N, dtype=int)
        self.x_off = np.zeros(N + 1, dtype=int)
        rows_by_stage: list[list[int]] = [[] for _ in range(N + 1)]
        for i, rr in enumerate(rows):
            rows_by_stage[rr.stage].append(i)
        self.rows_by_stage = rows_by_stage
        s_off = np.zeros(len(rows), dtype=int)
        off = 0
        for k in range(N):
            self.u_off[k] = off
            off += n_u
            self.x_off[k + 1] = off
            off += n_x
            for i in rows_by_stage[k + 1]:
                s_off[i] = off
                off += 1
        self.s_off = s_off
        self.n_z = off

        # equality rows: dynamics, then optional terminal rows
        self.n_eq = N * n_x
        term_idx, term_val = (np.array([], dtype=int), np.array([]))
        if terminal is not None:
            term_idx = np.asarray(terminal[0], dtype=int)
            term_val = np.asarray(terminal[1], dtype=float)
            self.n_eq += term_idx.size
        n_kkt = self.n_z + self.n_eq

        # stage-interleaved permutation keeps the KKT matrix banded
        perm_z = np.zeros(self.n_z, dtype=int)
        perm_y = np.zeros(self.n_eq, dtype=int)
        pos = 0
        for k in range(N):
            perm_z[self.u_off[k]:self.u_off[k] + n_u] = np.arange(pos, pos + n_u)
            pos += n_u
            perm_y[k * n_x:(k + 1) * n_x] = np.arange(pos, pos + n_x)
            pos += n_x
            perm_z[self.x_off[k + 1]:self.x_off[k + 1] + n_x] = np.arange(pos, pos + n_x)
            pos += n_x
            for i in rows_by_stage[k + 1]:
                perm_z[s_off[i]] = pos
                pos += 1
        for t in range(term_idx.size):
            perm_y[N * n_x + t] = pos
            pos += 1
        assert pos == n_kkt

        # cost matrices (cost = sum (x-xref)' Q (x-xref) + ..., so P = 2Q)
        Q = np.asarray(Q, dtype=float)
        R = np.asarray(R, dtype=float)
        QN = np.asarray(QN, dtype=float)
        x_ref = np.asarray(x_ref, dtype=float)
        u_ref = np.asarray(u_ref, dtype=float)

        P = sp.lil_matrix((self.n_z, self.n_z))
        q = np.zeros(self.n_z)
        for k in range(N):
            o = self.u_off[k]
            P[o:o + n_u, o:o + n_u] = 2.0 * R
            q[o:o + n_u] = -2.0 * (R @ u_ref[k])
            o = self.x_off[k + 1]
            W = QN if k + 1 == N else Q
            P[o:o + n_x, o:o + n_x] = 2.0 * W
            q[o:o + n_x] = -2.0 * (W @ x_ref[k + 1])
        for i in range(len(rows)):
            P[s_off[i], s_off[i]] = 2.0 * w_l2
            q[s_off[i]] = w_l1
        self.P = P.tocsr()
        self.q = q

        # equalities E z = e
        E = sp.lil_matrix((self.n_eq, self.n_z))
        e = np.zeros(self.n_eq)
        x0 = np.asarray(x0, dtype=float)
        for k in range(N):
            ro = k * n_x
            E[ro:ro + n_x, self.x_off[k + 1]:self.x_off[k + 1] + n_x] = np.eye(n_x)
            E[ro:ro + n_x, self.u_off[k]:self.u_off[k] + n_u] = -B_seq[k]
            e[ro:ro + n_x] = r_seq[k]
            if k == 0:
                e[ro:ro + n_x] += A_seq[0] @ x0
            else:
                E[ro:ro + n_x, self.x_off[k]:self.x_off[k] + n_x] = -A_seq[k]
        for t, (ti, tv) in enumerate(zip(term_idx, term_val)):
            E[N * n_x + t, self.x_off[N] + ti] = 1.0
            e[N * n_x + t] = tv
        self.E = E.tocsr()
        self.e = e

        # inequalities G z <= h
        g_rows: list[tuple[np.ndarray, np.ndarray]] = []  # (cols, coefs)
        h: list[float] = []
        self.n_coll = len(rows)
        for k in range(N):
            for j in range(n_u):
                if np.isfinite(ub_u[j]):
                    g_rows.append((np.array([self.u_off[k] + j]), np.array([1.0])))
                    h.append(float(ub_u[j]))
                if np.isfinite(lb_u[j]):
                    g_rows.append((np.array([self.u_off[k] + j]), np.array([-1.0])))
                    h.append(float(-lb_u[j]))
        for k in range(1, N + 1):
            for j in range(n_x):
                if np.isfinite(ub_x[k, j]):
                    g_rows.append((np.array([self.x_off[k] + j]), np.array([1.0])))
                    h.append(float(ub_x[k, j]))
                if np.isfinite(lb_x[k, j]):
                    g_rows.append((np.array([self.x_off[k] + j]), np.array([-1.0])))
                    h.append(float(-lb_x[k, j]))
        self.coll_row_ids = []
        for i, rr in enumerate(rows):
            nz = np.nonzero(rr.coef)[0]
            cols = np.concatenate([self.x_off[rr.stage] + nz, [s_off[i]]])
            coefs = np.concatenate([rr.coef[nz], [-1.0]])
            self.coll_row_ids.append(len(g_rows))
            g_rows.append((cols, coefs))
            h.append(float(rr.rhs))
        self.slack_row_ids = []
        for i in range(len(rows)):
            self.slack_row_ids.append(len(g_rows))
            g_rows.append((np.array([s_off[i]]), np.array([-1.0])))
            h.append(0.0)
        self.m = len(g_rows)
        self.h = np.asarray(h, dtype=float)

        gi, gj, gv = [], [], []
        for i, (cols, coefs) in enumerate(g_rows):
            gi.extend([i] * len(cols))
            gj.extend(cols.tolist())
            gv.extend(coefs.tolist())
        self.G = sp.csr_matrix((gv, (gi, gj)), shape=(self.m, self.n_z))

        # static KKT entries in permuted coordinates
        si, sj, sv = [], [], []
        Pc = self.P.tocoo()
        si.extend(perm_z[Pc.row].tolist())
        sj.extend(perm_z[Pc.col].tolist())
        sv.extend(Pc.data.tolist())
        Ec = self.E.tocoo()
        si.extend(perm_y[Ec.row].tolist())
        sj.extend(perm_z[Ec.col].tolist())
        sv.extend(Ec.data.tolist())
        si.extend(perm_z[Ec.col].tolist())
        sj.extend(perm_y[Ec.row].tolist())
        sv.extend(Ec.data.tolist())
        si.extend(perm_z.tolist())
        sj.extend(perm_z.tolist())
        sv.extend([_REG] * self.n_z)
        si.extend(perm_y.tolist())
        sj.extend(perm_y.tolist())
        sv.extend([-_REG] * self.n_eq)
        si = np.asarray(si, dtype=int)
        sj = np.asarray(sj, dtype=int)
        sv = np.asarray(sv, dtype=float)

        # dynamic entries: G' D G pair pattern per inequality row
        di, dj, dvals, drow = [], [], [], []
        for i, (cols, coefs) in enumerate(g_rows):
            pc = perm_z[cols]
            for a in range(len(cols)):
                for b in range(len(cols)):
                    di.append(pc[a])
                    dj.append(pc[b])
                    dvals.append(coefs[a] * coefs[b])
                    drow.append(i)
        di = np.asarray(di, dtype=int)
        dj = np.asarray(dj, dtype=int)
        self.dyn_vals = np.asarray(dvals, dtype=float)
        self.dyn_row = np.asarray(drow, dtype=int)

        self.n_kkt = n_kkt
        self.perm_z = perm_z
        self.perm_y = perm_y
        if backend == "banded":
            bw = int(np.abs(si - sj).max())
            if di.size:
                bw = max(bw, int(np.abs(di - dj).max()))
            self.kl = self.ku = bw
            ldab = 2 * self.kl + self.ku + 1
            flat_static = (self.kl + self.ku + si - sj) * n_kkt + sj
            self.ab_static = np.bincount(
                flat_static, weights=sv, minlength=ldab * n_kkt
            ).reshape(ldab, n_kkt)
            self.dyn_flat = (self.kl + self.ku + di - dj) * n_kkt + dj
        else:
            self.static_i, self.static_j, self.static_v = si, sj, sv
            self.dyn_i, self.dyn_j = di, dj

    # -- linear algebra -------------------------------------------------

    def _factor(self, d: np.ndarray):
        if self.backend == "banded":
            ab = self.ab_static.copy()
            ab.ravel()[:] += np.bincount(
                self.dyn_flat, weights=self.dyn_vals * d[self.dyn_row],
                minlength=ab.size)
            lu, piv, info = lapack.dgbtrf(ab, self.kl, self.ku)
            if info != 0:
                raise QpFailure(f"banded KKT factorization failed (info={info})")
            return ("banded", lu, piv)
        K = np.zeros((self.n_kkt, self.n_kkt))
        np.add.at(K, (self.static_i, self.static_j), self.static_v)
        np.add.at(K, (self.dyn_i, self.dyn_j), self.dyn_vals * d[self.dyn_row])
        lu, piv = sla.lu_factor(K)
        return ("dense", lu, piv)

    def _solve_once(self, fac, rhs_z, rhs_y):
        rhs = np.zeros(self.n_kkt)
        rhs[self.perm_z] = rhs_z
        rhs[self.perm_y] = rhs_y
        if fac[0] == "banded":
            sol, info = lapack.dgbtrs(fac[1], self.kl, self.ku, rhs, fac[2])
            if info != 0:
                raise QpFailure("banded KKT solve failed")
        else:
            sol = sla.lu_solve((fac[1], fac[2]), rhs)
        return sol[self.perm_z], sol[self.perm_y]

    def _newton_step(self, fac, t, lam, r_d, r_e, r_i, r_c):
        """Newton direction for the full primal-dual system, computed via
        the condensed (z, y) solve and polished by full-space refinement.

        Refining against the uncondensed residuals matters: the condensed
        elimination multiplies solve errors by lam/t, which is enormous
        once complementarity pairs resolve.
        """
        d = lam / t
        dz = np.zeros(self.n_z)
        dy = np.zeros(self.n_eq)
        dlam = np.zeros(self.m)
        dt = np.zeros(self.m)
        rd, re, ri, rc = r_d, r_e, r_i, r_c
        for _ in range(3):
            rhs_z = -rd - self.G.T @ ((lam * ri - rc) / t)
            cz, cy = self._solve_once(fac, rhs_z, -re)
            clam = d * (self.G @ cz) + (lam * ri - rc) / t
            ct = -ri - self.G @ cz
            dz += cz
            dy += cy
            dlam += clam
            dt += ct
            # true residuals of the 4-block Newton system
            rd = r_d + self.P @ dz + _REG * dz + self.E.T @ dy + self.G.T @ dlam
            re = r_e + self.E @ dz - _REG * dy
            ri = r_i + self.G @ dz + dt
            rc = r_c + lam * dt + t * dlam
            worst = max(np.abs(rd).max(), np.abs(re).max(),
                        np.abs(ri).max(), np.abs(rc).max())
            if worst <= 1e-11 * (1.0 + self._scale):
                break
        return dz, dy, dlam, dt

    # -- interior point loop --------------------------------------------

    def solve(self) -> QpSolution:
        m = self.m
        self._scale = max(1.0, float(np.abs(self.q).max()),
                          float(np.abs(self.e).max()),
                          float(np.abs(self.h).max()) if m else 0.0)
        tol_res = max(_TOL_RES, 1e-12 * self._scale)
        tol_mu = max(_TOL_MU, 1e-13 * self._scale)

        if m == 0:
            fac = self._factor(np.zeros(0))
            z, y = self._solve2_refined(fac, -self.q, self.e)
            return self._finish(z, y, np.zeros(0), np.zeros(0), 0)

        # start from the equality-constrained minimizer, shifted interior
        fac = self._factor(np.zeros(m))
        z, y = self._solve2_refined(fac, -self.q, self.e)
        t_hat = self.h - self.G @ z
        t = t_hat + max(0.0, -1.5 * float(t_hat.min())) + 0.1
        lam = np.ones(m)

        best = None
        best_err = np.inf
        best_res = np.inf
        best_mu = np.inf
        stall = 0
        it = 0
        for it in range(1, _MAX_IPM + 1):
            r_d = self.P @ z + self.q + self.E.T @ y + self.G.T @ lam
            r_e = self.E @ z - self.e
            r_i = self.G @ z + t - self.h
            mu = float(lam @ t / m)
            res = max(np.abs(r_d).max(), np.abs(r_e).max(), np.abs(r_i).max())
            err = max(res, mu)
            if err < best_err:
                best_err = err
                best = (z.copy(), y.copy(), t.copy(), lam.copy())
            # mu excursions while the residual contracts (and residual
            # plateaus while mu contracts) are normal; a stall is neither
            # quantity improving its own best
            improved = res < 0.999 * best_res or mu < 0.999 * best_mu
            best_res = min(best_res, res)
            best_mu = min(best_mu, mu)
            stall = 0 if improved else stall + 1
            if res <= tol_res and mu <= tol_mu:
                break
            if stall >= _STALL_LIMIT:
                break

            fac = self._factor(lam / t)

            # predictor (affine scaling)
            dz, dy, dlam, dt = self._newton_step(fac, t, lam, r_d, r_e, r_i,
                                                 lam * t)
            a_p = self._max_step(t, dt)
            a_d = self._max_step(lam, dlam)
            mu_aff = float((lam + a_d * dlam) @ (t + a_p * dt) / m)
            sigma = min(0.8, max((mu_aff / mu) ** 3, 1e-6)) if mu > 0 else 0.0

            # corrector with Mehrotra's second-order term; a single step
            # length for all variables keeps the dual residual contracting
            # (P z couples primal steps into it)
            r_c = lam * t - sigma * mu + dlam * dt
            dz, dy, dlam, dt = self._newton_step(fac, t, lam, r_d, r_e, r_i, r_c)
            alpha = min(1.0, 0.995 * min(self._max_step(t, dt),
                                         self._max_step(lam, dlam)))
            if alpha < 1e-10:
                break
            z += alpha * dz
            y += alpha * dy
            t += alpha * dt
            lam += alpha * dlam

        r_d = self.P @ z + self.q + self.E.T @ y + self.G.T @ lam
        r_e = self.E @ z - self.e
        r_i = self.G @ z + t - self.h
        mu = float(lam @ t / m)
        if max(np.abs(r_d).max(), np.abs(r_e).max(), np.abs(r_i).max(), mu) > best_err:
            z, y, t, lam = best
        final_err = best_err if best is not None else np.inf
        if final_err > _ACCEPT_RES * self._scale:
            raise QpFailure(
                f"interior point stalled (residual {final_err:.2e})")
        return self._finish(z, y, t, lam, it)

    def _solve2_refined(self, fac, rhs_z, rhs_y):
        """Equality-only solve with one refinement pass (no inequalities)."""
        dz, dy = self._solve_once(fac, rhs_z, rhs_y)
        az = self.P @ dz + _REG * dz + self.E.T @ dy
        ay = self.E @ dz - _REG * dy
        cz, cy = self._solve_once(fac, rhs_z - az, rhs_y - ay)
        return dz + cz, dy + cy

    @staticmethod
    def _max_step(v, dv) -> float:
        neg = dv < 0
        if np.any(neg):
            return float(min(1.0, np.min(-v[neg] / dv[neg])))
        return 1.0

    def _finish(self, z, y, t, lam, it) -> QpSolution:
        N, n_x, n_u = self.N, self.n_x, self.n_u
        xs = np.zeros((N + 1, n_x))
        xs[0] = self.x0
        us = np.zeros((N, n_u))
        for k in range(N):
            us[k] = z[self.u_off[k]:self.u_off[k] + n_u]
            xs[k + 1] = z[self.x_off[k + 1]:self.x_off[k + 1] + n_x]
        slacks = z[self.s_off] if len(self.rows) else np.zeros(0)
        duals = lam[self.coll_row_ids] if len(self.rows) else np.zeros(0)
        r_d = self.P @ z + self.q + self.E.T @ y + (self.G.T @ lam if self.m else 0.0)
        r_e = self.E @ z - self.e
        kkt = max(np.abs(r_d).max(), np.abs(r_e).max())
        if self.m:
            r_i = self.G @ z + t - self.h
            kkt = max(kkt, np.abs(r_i).max(), float(lam @ t / self.m))
        obj = float(0.5 * z @ (self.P @ z) + self.q @ z)
        return QpSolution(xs, us, slacks, duals, kkt, it, obj)
