"""Quadcopter obstacle-avoidance case study.

The vehicle is a double integrator driven by commanded acceleration. At each
step a scenario QP trades a predicted-goal-error cost against one ECBF
half-plane per sampled obstacle offset; the attitude mapping is provided for
telemetry only.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .cbf_core import EcbfParams, SuperEllipsoidCbf, ecbf_halfplanes, superellipsoid_h
from .qp import prune_rows, solve, solve_with_slack
from .scenario import (
    RNG_NAME,
    DisturbanceModel,
    RiskConfig,
    ScenarioQp,
    draw_scenarios,
    make_rng,
    sample_bound,
)

log = logging.getLogger(__name__)

# stream tags for make_rng(seed, tag, ...)
_TRUTH_STREAM = 0
_SCENARIO_STREAM = 1
_REDRAW_STREAM = 2

# more than this fraction of slack-fallback steps marks a run degraded
DEGRADED_FRACTION = 0.05
AUDIT_TOL = 1e-8


def rotation_matrix(phi: float, theta: float, psi: float) -> np.ndarray:
    """Body-to-world rotation for Z-X-Y Euler angles (roll phi, pitch theta, yaw psi)."""
    cph, sph = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cps, sps = math.cos(psi), math.sin(psi)
    return np.array([
        [cps * cth - sph * sps * sth, -cph * sps, cps * sth + cth * sph * sps],
        [cth * sps + cps * sph * sth, cph * cps, sps * sth - cps * cth * sph],
        [-cph * sth, sph, cph * cth],
    ])


def attitude_to_accel(phi: float, theta: float, psi: float, thrust: float,
                      mass: float, g: float = 9.81) -> np.ndarray:
    """Small-angle map from desired attitude and total thrust to acceleration."""
    return np.array([
        g * (theta * math.cos(psi) + phi * math.sin(psi)),
        g * (theta * math.sin(psi) - phi * math.cos(psi)),
        thrust / mass - g,
    ])


def accel_to_attitude(u, psi_des: float, mass: float, g: float = 9.81):
    """Invert :func:`attitude_to_accel` for ``(phi_des, theta_des, total_thrust)``.

    ``u`` may be planar, in which case the vertical acceleration is zero.
    """
    u = np.asarray(u, dtype=float)
    ux, uy = u[0], u[1]
    uz = u[2] if u.size > 2 else 0.0
    s, c = math.sin(psi_des), math.cos(psi_des)
    phi = (ux * s - uy * c) / g
    theta = (ux * c + uy * s) / g
    return phi, theta, mass * (uz + g)


@dataclass(frozen=True)
class QuadState:
    r: np.ndarray
    rdot: np.ndarray

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.r, dtype=float)).copy()
        v = np.atleast_1d(np.asarray(self.rdot, dtype=float)).copy()
        if r.shape != v.shape or r.size not in (2, 3):
            raise ValueError("position and velocity must both be 2- or 3-vectors")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v))):
            raise ValueError("state must be finite")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "rdot", v)

    @classmethod
    def at_rest(cls, r) -> "QuadState":
        r = np.asarray(r, dtype=float)
        return cls(r, np.zeros_like(r))


def step_dynamics(s: QuadState, u, dt: float) -> QuadState:
    """Exact zero-order-hold step of the double integrator."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=float)
    return QuadState(s.r + s.rdot * dt + 0.5 * u * dt * dt, s.rdot + u * dt)


def _default_cbf():
    return SuperEllipsoidCbf(np.array([7.5, 7.5]), np.array([0.4, 0.4]), 0.4)


@dataclass(frozen=True)
class QuadParams:
    mass: float = 1.0
    gravity: float = 9.81
    cbf: SuperEllipsoidCbf = field(default_factory=_default_cbf)
    goal: np.ndarray = field(default_factory=lambda: np.array([7.9, 8.1]))
    cost_F: np.ndarray = field(default_factory=lambda: np.eye(2))
    cost_G: np.ndarray = field(default_factory=lambda: 0.1 * np.eye(2))
    ecbf: EcbfParams = field(default_factory=EcbfParams)
    dt: float = 0.1
    u_lower: np.ndarray = field(default_factory=lambda: np.full(2, -5.0))
    u_upper: np.ndarray = field(default_factory=lambda: np.full(2, 5.0))
    disturbance: DisturbanceModel = field(
        default_factory=lambda: DisturbanceModel.interval(-0.1, 0.1))
    risk: RiskConfig = field(default_factory=lambda: RiskConfig(0.1, 0.01, 2))
    horizon: float = 60.0
    goal_tol: float = 0.1
    # lookahead (s) for the predicted position in the goal cost; None -> dt
    preview: Optional[float] = 1.0
    bound_formula: str = "campi"
    n_scenarios: Optional[int] = None
    # "auto" -> exact-2d for planar runs, dominance otherwise; None disables
    prune: Optional[str] = "auto"
    redraw_truth: bool = False

    def __post_init__(self):
        for name in ("goal", "cost_F", "cost_G", "u_lower", "u_upper"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        m = self.cbf.dim
        if self.goal.shape != (m,):
            raise ValueError(f"goal must have dimension {m}")
        for name in ("cost_F", "cost_G"):
            M = getattr(self, name)
            if M.shape != (m, m) or not np.allclose(M, M.T, atol=1e-12):
                raise ValueError(f"{name} must be a symmetric {m}x{m} matrix")
            if np.linalg.eigvalsh(M).min() < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
        lo = np.broadcast_to(self.u_lower, (m,)).copy()
        hi = np.broadcast_to(self.u_upper, (m,)).copy()
        if np.any(lo > hi):
            raise ValueError("u_lower exceeds u_upper")
        object.__setattr__(self, "u_lower", lo)
        object.__setattr__(self, "u_upper", hi)
        if self.dt <= 0 or self.goal_tol <= 0 or self.horizon <= 0:
            raise ValueError("dt, goal_tol and horizon must be positive")
        if self.preview is not None and self.preview <= 0:
            raise ValueError("preview must be positive")
        if self.mass <= 0 or self.gravity <= 0:
            raise ValueError("mass and gravity must be positive")
        if self.risk.dims != m:
            raise ValueError(f"risk.dims={self.risk.dims} but the control has dimension {m}")
        if self.bound_formula not in ("campi", "eq8"):
            raise ValueError(f"unknown bound formula {self.bound_formula!r}")
        if self.prune not in (None, "auto", "exact-2d", "dominance"):
            raise ValueError(f"unknown pruning mode {self.prune!r}")

    @property
    def dim(self) -> int:
        return self.cbf.dim

    @property
    def lookahead(self) -> float:
        return self.dt if self.preview is None else self.preview

    @property
    def prune_mode(self) -> Optional[str]:
        if self.prune == "auto":
            return "exact-2d" if self.dim == 2 else "dominance"
        return self.prune

    def sample_count(self) -> int:
        if self.n_scenarios is not None:
            return int(self.n_scenarios)
        return sample_bound(self.risk, self.bound_formula)

    def with_epsilon(self, epsilon: float) -> "QuadParams":
        return replace(self, risk=replace(self.risk, epsilon=epsilon))

    def to_dict(self) -> dict:
        return {
            "mass": self.mass,
            "gravity": self.gravity,
            "obstacle": self.cbf.obstacle_nominal.tolist(),
            "shape": self.cbf.shape.tolist(),
            "safety_margin": self.cbf.safety_margin,
            "goal": self.goal.tolist(),
            "cost_F": self.cost_F.tolist(),
            "cost_G": self.cost_G.tolist(),
            "k1": self.ecbf.k1,
            "k2": self.ecbf.k2,
            "dt": self.dt,
            "u_lower": self.u_lower.tolist(),
            "u_upper": self.u_upper.tolist(),
            "disturbance": self.disturbance.to_dict(),
            "epsilon": self.risk.epsilon,
            "beta": self.risk.beta,
            "horizon": self.horizon,
            "goal_tol": self.goal_tol,
            "preview": self.preview,
            "bound_formula": self.bound_formula,
            "n_scenarios": self.n_scenarios,
            "prune": self.prune,
            "redraw_truth": self.redraw_truth,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QuadParams":
        data = dict(data)
        known = {"mass", "gravity", "obstacle", "shape", "safety_margin", "goal",
                 "cost_F", "cost_G", "k1", "k2", "dt", "u_lower", "u_upper",
                 "disturbance", "epsilon", "beta", "horizon", "goal_tol", "preview",
                 "bound_formula", "n_scenarios", "prune", "redraw_truth"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown quad parameter(s): {sorted(unknown)}")
        base = cls()
        cbf = SuperEllipsoidCbf(
            data.pop("obstacle", base.cbf.obstacle_nominal),
            data.pop("shape", base.cbf.shape),
            data.pop("safety_margin", base.cbf.safety_margin),
        )
        m = cbf.dim
        ecbf = EcbfParams(data.pop("k1", base.ecbf.k1), data.pop("k2", base.ecbf.k2))
        dist = data.pop("disturbance", None)
        dist = base.disturbance if dist is None else DisturbanceModel.from_dict(dist)
        risk = RiskConfig(data.pop("epsilon", base.risk.epsilon),
                          data.pop("beta", base.risk.beta), m)
        defaults_nd = {
            "goal": base.goal, "cost_F": np.eye(m), "cost_G": 0.1 * np.eye(m),
            "u_lower": -5.0, "u_upper": 5.0,
        }
        kw = {k: data.pop(k, v) for k, v in defaults_nd.items()}
        kw["u_lower"] = np.broadcast_to(np.asarray(kw["u_lower"], dtype=float), (m,))
        kw["u_upper"] = np.broadcast_to(np.asarray(kw["u_upper"], dtype=float), (m,))
        return cls(cbf=cbf, ecbf=ecbf, disturbance=dist, risk=risk, **kw, **data)


def goal_cost_terms(s: QuadState, p: QuadParams) -> tuple[np.ndarray, np.ndarray]:
    """Hessian and linear term of the goal cost in ``u``.

    The cost is ``(r(u) - goal)' F (r(u) - goal) + u' G u`` with the
    predicted position ``r(u) = r + rdot*T + u*T^2/2`` (``T`` the
    lookahead), written as ``1/2 u'Hu + c'u + const``.
    """
    T = p.lookahead
    e = s.r + s.rdot * T - p.goal
    H = 2.0 * (0.25 * T**4 * p.cost_F + p.cost_G)
    c = T * T * (p.cost_F @ e)
    return 0.5 * (H + H.T), c


def build_step_qp(s: QuadState, p: QuadParams, scenarios) -> ScenarioQp:
    """Scenario QP for one step: goal cost plus one ECBF row per offset.

    Rows are rescaled to unit normals (same half-planes) so that solver and
    audit tolerances are in acceleration units; raw ECBF gradients reach
    1e5 far from the obstacle.
    """
    scenarios = np.asarray(scenarios, dtype=float).ravel()
    if scenarios.size < 1:
        raise ValueError("need at least one scenario")
    H, c = goal_cost_terms(s, p)
    A, b = ecbf_halfplanes(s.r, s.rdot, p.cbf, scenarios, p.ecbf)
    norms = np.linalg.norm(A, axis=1)
    scale = np.where(norms > 0, norms, 1.0)
    A /= scale[:, None]
    b /= scale
    return ScenarioQp(H, c, A, b, p.u_lower, p.u_upper, scenarios=scenarios)


@dataclass
class StepResult:
    u: np.ndarray
    status: str
    active_count: int
    solve_ms: float
    fallback: bool
    max_violation: float
    kept_rows: int


def solve_step(qp: ScenarioQp, prune_mode: Optional[str]) -> StepResult:
    """Prune, solve, audit against every sampled row, fall back to slack if needed."""
    rows = None
    if prune_mode is not None:
        rows = prune_rows(qp.A, qp.b, qp.lower, qp.upper, prune_mode)
    problem = qp.to_problem(rows)
    t0 = time.perf_counter()
    sol = solve(problem)
    if sol.optimal and rows is not None and qp.max_violation(sol.u_star) > AUDIT_TOL:
        log.warning("pruned solve violates a dropped row; re-solving unpruned")
        problem = qp.to_problem()
        sol = solve(problem)
    fallback = False
    if not sol.optimal:
        log.warning("scenario QP %s; using slack-penalized fallback", sol.status)
        sol = solve_with_slack(problem)
        fallback = True
    ms = 1e3 * (time.perf_counter() - t0)
    return StepResult(
        u=sol.u_star, status=("fallback" if fallback else sol.status),
        active_count=len(sol.active_set), solve_ms=ms, fallback=fallback,
        max_violation=qp.max_violation(sol.u_star),
        kept_rows=problem.n_ineq,
    )


@dataclass
class TrajectoryLog:
    t: np.ndarray
    r: np.ndarray
    rdot: np.ndarray
    u: np.ndarray
    hbar_true: np.ndarray
    qp_status: list
    active_count: np.ndarray
    solve_ms: np.ndarray
    max_violation: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.size

    @property
    def dim(self) -> int:
        return self.r.shape[1]

    @property
    def arrived(self) -> bool:
        return bool(self.meta.get("arrived", False))

    @property
    def fallback_steps(self) -> int:
        return sum(1 for s in self.qp_status if s == "fallback")

    def csv_header(self) -> list[str]:
        axes = "xyz"[: self.dim]
        return (["t"] + [f"r_{a}" for a in axes] + [f"v_{a}" for a in axes]
                + [f"u_{a}" for a in axes]
                + ["hbar_true", "qp_status", "active_count", "solve_ms"])

    def rows(self):
        for k in range(len(self)):
            yield ([repr(float(self.t[k]))]
                   + [repr(float(v)) for v in self.r[k]]
                   + [repr(float(v)) for v in self.rdot[k]]
                   + [repr(float(v)) for v in self.u[k]]
                   + [repr(float(self.hbar_true[k])), self.qp_status[k],
                      str(int(self.active_count[k])), f"{self.solve_ms[k]:.6f}"])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.csv_header())
            w.writerows(self.rows())

    def write_metadata(self, path) -> None:
        Path(path).write_text(json.dumps(self.meta, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8", newline="\n")

    @classmethod
    def read_csv(cls, path, meta: Optional[dict] = None) -> "TrajectoryLog":
        with open(path, encoding="utf-8", newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            data = list(rd)
        dim = sum(1 for h in header if h.startswith("r_"))
        cols = {h: i for i, h in enumerate(header)}
        axes = "xyz"[:dim]

        def num(name):
            return np.array([float(row[cols[name]]) for row in data])

        return cls(
            t=num("t"),
            r=np.column_stack([num(f"r_{a}") for a in axes]),
            rdot=np.column_stack([num(f"v_{a}") for a in axes]),
            u=np.column_stack([num(f"u_{a}") for a in axes]),
            hbar_true=num("hbar_true"),
            qp_status=[row[cols["qp_status"]] for row in data],
            active_count=num("active_count").astype(int),
            solve_ms=num("solve_ms"),
            max_violation=np.full(len(data), np.nan),
            meta=dict(meta or {}),
        )


def run_closed_loop(p: QuadParams, start: QuadState, seed: int,
                    n_scenarios: Optional[int] = None) -> TrajectoryLog:
    """Simulate one episode.

    The true obstacle offset is drawn once per episode (unless
    ``p.redraw_truth``); fresh scenarios are drawn every step from a stream
    keyed by ``(seed, step)``. Stops on arrival within ``goal_tol`` or at the
    horizon.
    """
    if start.r.size != p.dim:
        raise ValueError(f"start state has dimension {start.r.size}, params expect {p.dim}")
    n = int(n_scenarios) if n_scenarios is not None else p.sample_count()
    if n < 1:
        raise ValueError("need at least one scenario per step")
    d_true = float(np.ravel(p.disturbance.sample(1, make_rng(seed, _TRUTH_STREAM)))[0])
    prune_mode = p.prune_mode
    n_steps = int(round(p.horizon / p.dt))

    ts, rs, vs, us, hs, stat, act, ms, viol = [], [], [], [], [], [], [], [], []
    s = start
    arrived = False
    for k in range(n_steps + 1):
        d_k = d_true
        if p.redraw_truth and k > 0:
            d_k = float(np.ravel(p.disturbance.sample(1, make_rng(seed, _REDRAW_STREAM, k)))[0])
        ts.append(k * p.dt)
        rs.append(s.r)
        vs.append(s.rdot)
        hs.append(superellipsoid_h(s.r, s.rdot, p.cbf, d_k))
        if np.linalg.norm(s.r - p.goal) <= p.goal_tol:
            arrived = True
        if arrived or k == n_steps:
            us.append(np.full(p.dim, np.nan))
            stat.append("arrived" if arrived else "horizon")
            act.append(0)
            ms.append(0.0)
            viol.append(np.nan)
            break
        ds = draw_scenarios(p.disturbance, n, seed, _SCENARIO_STREAM, k)
        res = solve_step(build_step_qp(s, p, ds), prune_mode)
        us.append(res.u)
        stat.append(res.status)
        act.append(res.active_count)
        ms.append(res.solve_ms)
        viol.append(res.max_violation)
        s = step_dynamics(s, res.u, p.dt)

    n_fb = stat.count("fallback")
    n_solved = max(1, len(stat) - 1)
    meta = {
        "seed": int(seed),
        "d_true": d_true,
        "n_scenarios": n,
        "bound_formula": p.bound_formula if n_scenarios is None and p.n_scenarios is None else "override",
        "rng": RNG_NAME,
        "params": p.to_dict(),
        "start": {"r": start.r.tolist(), "rdot": start.rdot.tolist()},
        "arrived": arrived,
        "fallback_steps": n_fb,
        "degraded": n_fb > DEGRADED_FRACTION * n_solved,
    }
    if meta["degraded"]:
        log.warning("run seed=%d degraded: %d fallback steps", seed, n_fb)
    return TrajectoryLog(
        t=np.array(ts), r=np.array(rs), rdot=np.array(vs), u=np.array(us),
        hbar_true=np.array(hs), qp_status=stat, active_count=np.array(act, dtype=int),
        solve_ms=np.array(ms), max_violation=np.array(viol), meta=meta,
    )


@dataclass(frozen=True)
class RunSummary:
    time_to_goal: float
    path_length: float
    min_hbar: float
    incursion_steps: int
    incursion_duration: float
    fallback_steps: int
    arrived: bool

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate_run(log_: TrajectoryLog, p: QuadParams) -> RunSummary:
    """Time to goal (NaN if never reached), path length, barrier margin at the
    true offset, and the number and duration of steps with a negative margin."""
    dist = np.linalg.norm(log_.r - p.goal, axis=1)
    hit = np.flatnonzero(dist <= p.goal_tol)
    ttg = float(log_.t[hit[0]]) if hit.size else math.nan
    path = float(np.sum(np.linalg.norm(np.diff(log_.r, axis=0), axis=1)))
    neg = int(np.count_nonzero(log_.hbar_true < 0.0))
    return RunSummary(
        time_to_goal=ttg,
        path_length=path,
        min_hbar=float(np.min(log_.hbar_true)),
        incursion_steps=neg,
        incursion_duration=neg * p.dt,
        fallback_steps=log_.fallback_steps,
        arrived=bool(hit.size),
    )
