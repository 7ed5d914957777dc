from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import QpProblem, QpSolution


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    primal: float
    dual: float
    complementarity: float
    tol: float

    @property
    def max_residual(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementarity)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol


def _nz(v, m):
    return np.zeros(m) if v is None else np.asarray(v, dtype=float)


def check_kkt(p: QpProblem, s: QpSolution, tol: float = 1e-8) -> KktReport:
    """Max residual per KKT category for ``s`` on ``p``.

    Infinite bounds contribute nothing. A failing report is returned, never
    raised.
    """
    m = p.dims
    u = np.asarray(s.u_star, dtype=float)
    lam = _nz(s.multipliers, p.n_ineq)
    mu_lo = _nz(s.lower_multipliers, m)
    mu_hi = _nz(s.upper_multipliers, m)

    grad = p.hessian @ u + p.linear + p.A.T @ lam - mu_lo + mu_hi
    stationarity = float(np.max(np.abs(grad), initial=0.0))

    row_res = p.A @ u - p.b
    lo_fin = np.isfinite(p.lower)
    hi_fin = np.isfinite(p.upper)
    lo_res = np.zeros(m)
    hi_res = np.zeros(m)
    lo_res[lo_fin] = p.lower[lo_fin] - u[lo_fin]
    hi_res[hi_fin] = u[hi_fin] - p.upper[hi_fin]
    primal = max(0.0, float(np.max(row_res, initial=0.0)),
                 float(np.max(lo_res, initial=0.0)), float(np.max(hi_res, initial=0.0)))

    dual = max(0.0, -float(np.min(np.concatenate([lam, mu_lo, mu_hi]), initial=0.0)))

    comp = np.concatenate([
        np.abs(lam * row_res),
        np.abs(mu_lo * lo_res),
        np.abs(mu_hi * hi_res),
    ])
    complementarity = float(np.max(comp, initial=0.0))
    return KktReport(stationarity, primal, dual, complementarity, tol)
