from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

SYM_TOL = 1e-12
PSD_FLOOR = -1e-9


@dataclass(frozen=True)
class QpProblem:
    """``min 1/2 u'Hu + c'u  s.t.  A u <= b,  lower <= u <= upper``.

    Infinite bounds are allowed. ``A`` may have zero rows.
    """

    hessian: np.ndarray
    linear: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        c = np.atleast_1d(np.asarray(self.linear, dtype=float))
        m = c.size
        if H.shape != (m, m):
            raise ValueError(f"hessian shape {H.shape} does not match linear term of size {m}")
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = np.zeros((0, m))
        A = np.ascontiguousarray(A.reshape(-1, m))
        b = np.ascontiguousarray(np.atleast_1d(np.asarray(self.b, dtype=float)).ravel())
        if b.size != A.shape[0]:
            raise ValueError(f"{A.shape[0]} constraint rows but {b.size} offsets")
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (m,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (m,)).copy()
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(c))
                and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("problem data must be finite")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("bounds must not be NaN")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        if np.max(np.abs(H - H.T), initial=0.0) > SYM_TOL:
            raise ValueError("hessian is not symmetric")
        H = 0.5 * (H + H.T)
        if np.linalg.eigvalsh(H).min() < PSD_FLOOR:
            raise ValueError("hessian is not positive semidefinite")
        for name, val in (("hessian", H), ("linear", c), ("A", A), ("b", b),
                          ("lower", lo), ("upper", hi)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def dims(self) -> int:
        return self.linear.size

    @property
    def n_ineq(self) -> int:
        return self.A.shape[0]

    def objective(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(0.5 * u @ self.hessian @ u + self.linear @ u)

    def with_rows(self, idx) -> "QpProblem":
        """Same problem restricted to the inequality rows ``idx``."""
        idx = np.asarray(idx, dtype=np.intp)
        return QpProblem(self.hessian, self.linear, self.A[idx], self.b[idx],
                         self.lower, self.upper)


@dataclass
class QpSolution:
    u_star: np.ndarray
    objective: float
    status: str
    active_set: list = field(default_factory=list)
    kkt_residual: float = np.inf
    iterations: int = 0
    solve_time: float = 0.0
    multipliers: Optional[np.ndarray] = None
    lower_multipliers: Optional[np.ndarray] = None
    upper_multipliers: Optional[np.ndarray] = None
    regularization: float = 0.0
    # nonnegative row weights (ineq, lower, upper) proving infeasibility
    certificate: Optional[tuple] = None
    slack: Optional[float] = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"
