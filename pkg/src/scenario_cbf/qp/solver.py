"""Dense dual active-set QP solver for tiny decision vectors and many rows.

The method starts from the unconstrained minimizer and repeatedly adds the
most violated row (normalized by its norm), taking partial steps that drop
active rows whose multipliers would turn negative. Each outer iteration is
one O(N m) scan over all rows plus an O(m^3) solve on the active set, which
suits m <= 6 and N in the tens of thousands. Box bounds join the scan as
2m implicit rows. Infeasibility is detected when the new row is a
nonnegative combination of the active ones, which yields a Farkas
certificate directly.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import kernels
from .kkt import check_kkt
from .problem import QpProblem, QpSolution

log = logging.getLogger(__name__)

__all__ = ["SolverOptions", "solve", "solve_with_slack"]


@dataclass(frozen=True)
class SolverOptions:
    kkt_tol: float = 1e-8
    feas_tol: float = 1e-8
    regularization: float = 1e-10
    # None -> 50 * (m + number of rows violated at the unconstrained minimizer)
    max_iter: Optional[int] = None


DEFAULT_OPTIONS = SolverOptions()


def _stack_rows(p: QpProblem):
    m = p.dims
    eye = np.eye(m)
    lo_idx = np.flatnonzero(np.isfinite(p.lower))
    hi_idx = np.flatnonzero(np.isfinite(p.upper))
    A = np.vstack([p.A, -eye[lo_idx], eye[hi_idx]])
    b = np.concatenate([p.b, -p.lower[lo_idx], p.upper[hi_idx]])
    return np.ascontiguousarray(A), np.ascontiguousarray(b), lo_idx, hi_idx


def _factor(H: np.ndarray, reg: float):
    """Inverse of H (regularized only when H is numerically singular) and the
    matrix that inverse belongs to."""
    ev = np.linalg.eigvalsh(H)
    if ev[0] <= 1e-12 * max(1.0, ev[-1]):
        # slightly negative eigenvalues (within the PSD floor) are lifted too
        reg = reg - min(0.0, float(ev[0]))
        H = H + reg * np.eye(H.shape[0])
    else:
        reg = 0.0
    L = np.linalg.cholesky(H)
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv, reg, H


def _split(vec, n, lo_idx, hi_idx, m):
    ineq = vec[:n].copy()
    lo = np.zeros(m)
    hi = np.zeros(m)
    lo[lo_idx] = vec[n:n + lo_idx.size]
    hi[hi_idx] = vec[n + lo_idx.size:]
    return ineq, lo, hi


def solve(p: QpProblem, opts: SolverOptions = DEFAULT_OPTIONS) -> QpSolution:
    t0 = time.perf_counter()
    m, n = p.dims, p.n_ineq
    H = p.hessian
    Hinv, reg, H = _factor(H, opts.regularization)
    Af, bf, lo_idx, hi_idx = _stack_rows(p)
    norms = np.linalg.norm(Af, axis=1)
    inv_norm = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 1.0)
    # normalized-violation threshold that keeps every absolute violation <= feas_tol
    stop = opts.feas_tol / max(1.0, float(norms.max(initial=1.0)))

    x = -Hinv @ p.linear
    if opts.max_iter is None:
        n_viol = int(np.count_nonzero(Af @ x - bf > opts.feas_tol))
        cap = 50 * (m + n_viol)
    else:
        cap = opts.max_iter

    W: list[int] = []
    lam = np.zeros(0)
    iters = 0
    status = "optimal"
    certificate = None

    def finish(status, x, W, lam, certificate=None):
        full = np.zeros(Af.shape[0])
        if W:
            full[W] = lam
        ineq, lo, hi = _split(full, n, lo_idx, hi_idx, m)
        sol = QpSolution(
            u_star=x, objective=p.objective(x), status=status,
            active_set=sorted(i for i in W if i < n), iterations=iters,
            multipliers=ineq, lower_multipliers=lo, upper_multipliers=hi,
            regularization=reg, certificate=certificate,
        )
        if status == "optimal":
            sol.kkt_residual = check_kkt(p, sol, opts.kkt_tol).max_residual
        sol.solve_time = time.perf_counter() - t0
        return sol

    while True:
        j_new, viol = kernels.most_violated(Af, bf, x, inv_norm)
        if j_new < 0 or viol <= stop:
            break
        a_p = Af[j_new]
        lam_p = 0.0
        while True:
            iters += 1
            if iters > cap:
                return finish("max-iterations", x, W, lam)
            Hin = Hinv @ a_p
            # linear dependence is judged in the Euclidean metric; the H^-1
            # metric is unreliable when H was regularized
            dependent = False
            if W:
                N = Af[W].T
                coef = np.linalg.lstsq(N, a_p, rcond=None)[0]
                resid = float(np.linalg.norm(a_p - N @ coef))
                dependent = resid <= 1e-10 * float(np.linalg.norm(a_p))
                if dependent:
                    dlam = -coef
                    dlam[np.abs(dlam) <= 1e-12 * max(1.0, float(np.abs(dlam).max()))] = 0.0
                    z = np.zeros(m)
                else:
                    HiN = Hinv @ N
                    M = N.T @ HiN
                    dlam = -np.linalg.solve(M, N.T @ Hin)
                    z = -(Hin + HiN @ dlam)
            else:
                dependent = not np.any(a_p)
                dlam = np.zeros(0)
                z = -Hin

            t_part, block = np.inf, -1
            for k in np.flatnonzero(dlam < 0):
                tk = lam[k] / -dlam[k]
                # ties go to the lowest row index (Bland)
                if tk < t_part or (tk == t_part and W[k] < W[block]):
                    t_part, block = tk, k

            if dependent:
                if block < 0:
                    y = np.zeros(Af.shape[0])
                    y[j_new] = 1.0
                    if W:
                        y[W] += np.maximum(dlam, 0.0)
                    cert = _split(y, n, lo_idx, hi_idx, m)
                    return finish("infeasible", x, W, lam, certificate=cert)
                t = t_part
            else:
                curv = -float(a_p @ z)
                t_full = float(a_p @ x - bf[j_new]) / curv
                t = min(t_full, t_part)
                x = x + t * z
            if W:
                lam = lam + t * dlam
            lam_p += t
            if not dependent and t < t_part:
                W.append(j_new)
                lam = np.append(lam, lam_p)
                break
            del W[block]
            lam = np.delete(lam, block)

    x, lam = _polish(H, p.linear, Af, bf, x, W, lam, stop, inv_norm)
    return finish(status, x, W, lam)


def _polish(H, c, Af, bf, x, W, lam, stop, inv_norm):
    """Re-solve the equality system on the final active set to shed drift."""
    if not W:
        return x, lam
    m = x.size
    N = Af[W]
    k = len(W)
    K = np.zeros((m + k, m + k))
    K[:m, :m] = H
    K[:m, m:] = N.T
    K[m:, :m] = N
    rhs = np.concatenate([-c, bf[W]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return x, lam
    xp, lp = sol[:m], sol[m:]
    if not np.all(np.isfinite(sol)) or np.any(lp < -1e-12):
        return x, lam
    _, viol = kernels.most_violated(Af, bf, xp, inv_norm)
    if viol > stop:
        return x, lam
    return xp, np.maximum(lp, 0.0)


def solve_with_slack(p: QpProblem, rho: float = 1e6,
                     opts: SolverOptions = DEFAULT_OPTIONS) -> QpSolution:
    """Softened problem: add one shared slack ``s >= 0`` to every row and pay
    ``rho * s**2``. Always feasible when the box is nonempty."""
    m = p.dims
    H = np.zeros((m + 1, m + 1))
    H[:m, :m] = p.hessian
    H[m, m] = 2.0 * rho
    c = np.append(p.linear, 0.0)
    A = np.hstack([p.A, -np.ones((p.n_ineq, 1))])
    aug = QpProblem(H, c, A, p.b, np.append(p.lower, 0.0), np.append(p.upper, np.inf))
    s = solve(aug, opts)
    u = s.u_star[:m]
    out = QpSolution(
        u_star=u, objective=p.objective(u), status=s.status,
        active_set=s.active_set, iterations=s.iterations, solve_time=s.solve_time,
        multipliers=s.multipliers,
        lower_multipliers=None if s.lower_multipliers is None else s.lower_multipliers[:m],
        upper_multipliers=None if s.upper_multipliers is None else s.upper_multipliers[:m],
        regularization=s.regularization, slack=float(s.u_star[m]),
    )
    out.kkt_residual = s.kkt_residual
    log.info("slack-penalized solve used: slack=%.3e status=%s", out.slack, out.status)
    return out
