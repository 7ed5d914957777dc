"""Sample complexity, uncertainty sampling and scenario-program assembly."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .cbf_core import HalfPlaneConstraint
from .qp import QpProblem, solve

__all__ = [
    "RiskConfig",
    "DisturbanceModel",
    "ScenarioQp",
    "GuaranteeReport",
    "BOUND_FORMULAS",
    "RNG_NAME",
    "sample_bound_eq8",
    "sample_bound_campi",
    "sample_bound",
    "make_rng",
    "draw_scenarios",
    "assemble_scenario_qp",
    "estimate_violation_mc",
    "toy_violation",
    "validate_guarantee",
]

BOUND_FORMULAS = ("campi", "eq8")
RNG_NAME = "numpy.PCG64 via SeedSequence(entropy=[seed, *stream])"


@dataclass(frozen=True)
class RiskConfig:
    epsilon: float
    beta: float = 0.01
    dims: int = 2

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if int(self.dims) != self.dims or self.dims < 1:
            raise ValueError(f"dims must be a positive integer, got {self.dims}")
        object.__setattr__(self, "dims", int(self.dims))


def sample_bound_eq8(cfg: RiskConfig) -> int:
    """``ceil(2/eps ln(1/beta) + 2m + 2m/eps ln(1/beta))``."""
    eps, m = cfg.epsilon, cfg.dims
    log_b = math.log(1.0 / cfg.beta)
    return math.ceil(2.0 / eps * log_b + 2 * m + 2 * m / eps * log_b)


def sample_bound_campi(cfg: RiskConfig) -> int:
    """``ceil(2/eps ln(1/beta) + 2m + 2m/eps ln(2/eps))``.

    The classical explicit scenario bound: 216, 484, 3045 and 39618 at
    eps = 0.1, 0.05, 0.01, 0.001 with beta = 0.01, m = 2.
    """
    eps, m = cfg.epsilon, cfg.dims
    return math.ceil(2.0 / eps * math.log(1.0 / cfg.beta) + 2 * m
                     + 2 * m / eps * math.log(2.0 / eps))


def sample_bound(cfg: RiskConfig, formula: str = "campi") -> int:
    if formula == "campi":
        return sample_bound_campi(cfg)
    if formula == "eq8":
        return sample_bound_eq8(cfg)
    raise ValueError(f"unknown bound formula {formula!r}; choose from {BOUND_FORMULAS}")


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent, platform-stable stream keyed by ``(seed, *stream)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


@dataclass(frozen=True)
class DisturbanceModel:
    """Bounded iid disturbance model.

    kinds:
      ``uniform-interval`` -- scalar uniform on ``[low, high]``
      ``uniform-box``      -- vector uniform on the box ``low <= d <= high``
      ``finite-set``       -- uniform choice among ``values`` (rows)
    """

    kind: str
    low: object = None
    high: object = None
    values: object = None

    KINDS = ("uniform-interval", "uniform-box", "finite-set")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.kind == "finite-set":
            vals = np.asarray(self.values, dtype=float)
            if vals.size == 0:
                raise ValueError("finite-set support is empty")
            if not np.all(np.isfinite(vals)):
                raise ValueError("finite-set values must be finite")
            object.__setattr__(self, "values", vals)
            return
        lo = np.asarray(self.low, dtype=float)
        hi = np.asarray(self.high, dtype=float)
        if self.kind == "uniform-interval" and (lo.ndim or hi.ndim):
            raise ValueError("uniform-interval needs scalar bounds")
        if lo.shape != hi.shape or lo.size == 0:
            raise ValueError("bounds must be non-empty and of equal shape")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("support must be bounded")
        if np.any(lo > hi):
            raise ValueError("empty support: low > high")
        object.__setattr__(self, "low", lo)
        object.__setattr__(self, "high", hi)

    @classmethod
    def interval(cls, low: float, high: float) -> "DisturbanceModel":
        return cls("uniform-interval", low=low, high=high)

    @classmethod
    def box(cls, low, high) -> "DisturbanceModel":
        return cls("uniform-box", low=low, high=high)

    @classmethod
    def finite(cls, values) -> "DisturbanceModel":
        return cls("finite-set", values=values)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ValueError(f"need at least one sample, got n={n}")
        if self.kind == "finite-set":
            return self.values[rng.integers(0, self.values.shape[0], size=n)]
        shape = (n,) + self.low.shape
        return rng.uniform(self.low, self.high, size=shape)

    def contains(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        if self.kind == "finite-set":
            vals = self.values.reshape(self.values.shape[0], -1)
            flat = d.reshape(d.shape[0], -1) if d.ndim else d.reshape(1, 1)
            return np.array([np.any(np.all(vals == row, axis=1)) for row in flat])
        inside = (d >= self.low) & (d <= self.high)
        return inside if inside.ndim <= 1 else np.all(inside.reshape(inside.shape[0], -1), axis=1)

    def to_dict(self) -> dict:
        if self.kind == "finite-set":
            return {"kind": self.kind, "values": self.values.tolist()}
        return {"kind": self.kind, "low": self.low.tolist(), "high": self.high.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "DisturbanceModel":
        return cls(data["kind"], low=data.get("low"), high=data.get("high"),
                   values=data.get("values"))


def draw_scenarios(model: DisturbanceModel, n: int, seed: int, *stream: int) -> np.ndarray:
    """``n`` iid draws from ``model``; the first ``k`` draws do not depend on ``n``."""
    return model.sample(n, make_rng(seed, *stream))


@dataclass(frozen=True)
class ScenarioQp:
    """Cost ``1/2 u'Hu + c'u`` with one sampled half-plane per scenario."""

    hessian: np.ndarray
    linear: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    scenarios: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        if H.shape[0] != H.shape[1] or np.max(np.abs(H - H.T), initial=0.0) > 1e-12:
            raise ValueError("cost hessian must be square and symmetric")
        if np.linalg.eigvalsh(0.5 * (H + H.T)).min() < -1e-9:
            raise ValueError("cost hessian is not positive semidefinite")
        m = H.shape[0]
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (m,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (m,)).copy()
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        A = np.asarray(self.A, dtype=float).reshape(-1, m)
        b = np.asarray(self.b, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise ValueError("constraint rows and offsets disagree")
        object.__setattr__(self, "hessian", H)
        object.__setattr__(self, "linear", np.asarray(self.linear, dtype=float).ravel())
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n_scenarios(self) -> int:
        return self.b.size

    @property
    def constraints(self) -> list[HalfPlaneConstraint]:
        return [HalfPlaneConstraint(a, bi) for a, bi in zip(self.A, self.b)]

    def to_problem(self, rows=None) -> QpProblem:
        if rows is None:
            return QpProblem(self.hessian, self.linear, self.A, self.b, self.lower, self.upper)
        return QpProblem(self.hessian, self.linear, self.A[rows], self.b[rows],
                         self.lower, self.upper)

    def max_violation(self, u) -> float:
        """Largest ``a_i u - b_i`` over all sampled rows (the post-solve audit)."""
        return float(np.max(self.A @ np.asarray(u, dtype=float) - self.b, initial=-np.inf))


def assemble_scenario_qp(
    cost_hessian,
    cost_linear,
    constraint_gen: Callable[[object], HalfPlaneConstraint],
    scenarios: Sequence,
    bounds,
) -> ScenarioQp:
    """One half-plane per scenario, in input order."""
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("need at least one scenario")
    rows = [constraint_gen(d) for d in scenarios]
    A = np.vstack([r.normal for r in rows])
    b = np.array([r.offset for r in rows])
    lower, upper = bounds
    return ScenarioQp(cost_hessian, cost_linear, A, b, lower, upper,
                      scenarios=np.asarray(scenarios))


def estimate_violation_mc(
    u,
    constraint_eval: Callable,
    model: DisturbanceModel,
    trials: int,
    seed: int,
    vectorized: bool = False,
) -> tuple[float, float]:
    """Monte Carlo violation probability and its 95% normal-approx half-width.

    With ``vectorized=True`` ``constraint_eval(u, ds)`` receives all samples
    at once and must return an array.
    """
    if trials < 100:
        raise ValueError(f"need at least 100 trials, got {trials}")
    ds = draw_scenarios(model, trials, seed)
    if vectorized:
        vals = np.asarray(constraint_eval(u, ds), dtype=float)
    else:
        vals = np.array([constraint_eval(u, d) for d in ds], dtype=float)
    p = float(np.count_nonzero(vals > 0.0)) / trials
    return p, 1.96 * math.sqrt(p * (1.0 - p) / trials)


def toy_violation(u: float) -> float:
    """Exact violation probability of ``u >= d`` for ``d ~ U[0, 1]``."""
    return float(min(1.0, max(0.0, 1.0 - u)))


@dataclass(frozen=True)
class GuaranteeReport:
    epsilon: float
    beta: float
    n_samples: int
    repetitions: int
    bad_designs: int
    threshold: float

    @property
    def bad_fraction(self) -> float:
        return self.bad_designs / self.repetitions

    @property
    def passed(self) -> bool:
        return self.bad_fraction <= self.threshold


def validate_guarantee(
    epsilon: float,
    beta: float,
    repetitions: int,
    seed: int,
    n_samples: int | None = None,
    slack: float | None = None,
    dims: int = 2,
) -> GuaranteeReport:
    """Repeat the 1-D scenario design ``min u^2/2 s.t. u >= d_i`` with
    ``d ~ U[0, 1]`` and count designs whose exact violation exceeds ``epsilon``.

    ``N`` comes from the campi bound at ``dims`` decision variables unless
    ``n_samples`` is given. The default of 2 matches the planar controller;
    any ``dims >= 1`` is conservative for the scalar toy. The pass threshold
    is ``beta + slack`` with ``slack`` defaulting to ``beta``.
    """
    if repetitions < 100:
        raise ValueError(f"need at least 100 repetitions, got {repetitions}")
    cfg = RiskConfig(epsilon, beta, dims)
    n = sample_bound_campi(cfg) if n_samples is None else int(n_samples)
    model = DisturbanceModel.interval(0.0, 1.0)
    bad = 0
    for rep in range(repetitions):
        ds = draw_scenarios(model, n, seed, rep)
        qp = ScenarioQp(np.eye(1), np.zeros(1), -np.ones((n, 1)), -ds, -1.0, 2.0)
        sol = solve(qp.to_problem())
        if not sol.optimal:
            raise RuntimeError(f"toy design {rep} not solved: {sol.status}")
        if toy_violation(sol.u_star[0]) > epsilon:
            bad += 1
    thr = beta + (beta if slack is None else slack)
    return GuaranteeReport(epsilon, beta, n, repetitions, bad, thr)


def nested_objectives(qp: ScenarioQp, sizes: Iterable[int]) -> list[float]:
    """Optimal objective using only the first ``k`` scenarios, for each ``k``."""
    out = []
    for k in sizes:
        out.append(solve(qp.to_problem(np.arange(k))).objective)
    return out
