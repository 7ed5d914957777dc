"""Barrier functions and their conversion into half-plane constraints on u.

Every CBF condition handed to the QP layer is normalized to the canonical
form ``a @ u <= b`` (:class:`HalfPlaneConstraint`). Sign conventions live in
the ``*_halfplane`` builders and nowhere else.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "AffineCbf",
    "ControlAffineStep",
    "SuperEllipsoidCbf",
    "EcbfParams",
    "HalfPlaneConstraint",
    "discrete_cbf_residual",
    "affine_cbf_halfplane",
    "affine_cbf_L",
    "obstacle_cbf_L",
    "obstacle_cbf_L_printed",
    "superellipsoid_h",
    "superellipsoid_h_batch",
    "ecbf_halfplane",
    "ecbf_halfplanes",
    "eta_lower_bound",
    "stack_halfplanes",
]


def _vec(x, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


def _check_eta(eta: float) -> None:
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")


@dataclass(frozen=True)
class AffineCbf:
    """Affine barrier ``h(x) = p @ x + q``."""

    p: np.ndarray
    q: float = 0.0

    def __post_init__(self):
        p = _vec(self.p, "p")
        if not np.any(p):
            raise ValueError("p must not be the zero vector")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", float(self.q))

    def __call__(self, x) -> float:
        return float(self.p @ _vec(x, "x") + self.q)


@dataclass(frozen=True)
class ControlAffineStep:
    """Discrete control-affine map ``x+ = f(x) + g(x) u (+ d)``."""

    drift: Callable[[np.ndarray], np.ndarray]
    input_gain: Callable[[np.ndarray], np.ndarray]

    def f(self, x) -> np.ndarray:
        return _vec(self.drift(np.asarray(x, dtype=float)), "f(x)")

    def g(self, x) -> np.ndarray:
        gx = np.asarray(self.input_gain(np.asarray(x, dtype=float)), dtype=float)
        if gx.ndim == 0:
            gx = gx.reshape(1, 1)
        elif gx.ndim == 1:
            # a vector gain means a single-input system
            gx = gx.reshape(-1, 1)
        return gx

    def next_state(self, x, u, d=None) -> np.ndarray:
        x = _vec(x, "x")
        gx = self.g(x)
        u = _vec(u, "u")
        if gx.shape != (x.size, u.size):
            raise ValueError(f"g(x) has shape {gx.shape}, expected {(x.size, u.size)}")
        out = self.f(x) + gx @ u
        if d is not None:
            out = out + _vec(d, "d")
        return out


@dataclass(frozen=True)
class SuperEllipsoidCbf:
    """Quartic super-ellipsoid margin around an uncertain obstacle.

    ``shape`` holds the semi-axes (a, b[, c]) and fixes the working dimension;
    ``safety_margin`` is compared directly against the dimensionless quartic
    sum.
    """

    obstacle_nominal: np.ndarray
    shape: np.ndarray
    safety_margin: float

    def __post_init__(self):
        obs = _vec(self.obstacle_nominal, "obstacle_nominal")
        shp = _vec(self.shape, "shape")
        if obs.shape != shp.shape:
            raise ValueError("obstacle_nominal and shape must have the same length")
        if np.any(shp <= 0):
            raise ValueError("shape parameters must be positive")
        if self.safety_margin < 0:
            raise ValueError("safety_margin must be nonnegative")
        object.__setattr__(self, "obstacle_nominal", obs)
        object.__setattr__(self, "shape", shp)
        object.__setattr__(self, "safety_margin", float(self.safety_margin))

    @property
    def dim(self) -> int:
        return self.shape.size


@dataclass(frozen=True)
class EcbfParams:
    """Gains of the exponential barrier condition ``h'' + k1*h + k2*h' >= 0``."""

    k1: float = 6.0
    k2: float = 8.0

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("ECBF gains must be positive")


@dataclass(frozen=True)
class HalfPlaneConstraint:
    """``normal @ u <= offset``.

    A zero normal is allowed only when the constraint is vacuous
    (``offset >= 0``); such constraints carry ``vacuous=True``.
    """

    normal: np.ndarray
    offset: float
    vacuous: bool = field(init=False, default=False)

    def __post_init__(self):
        a = _vec(self.normal, "normal")
        b = float(self.offset)
        if not (np.all(np.isfinite(a)) and np.isfinite(b)):
            raise ValueError("half-plane entries must be finite")
        zero = not np.any(a)
        if zero and b < 0:
            raise ValueError("zero normal with negative offset: constraint can never hold")
        object.__setattr__(self, "normal", a)
        object.__setattr__(self, "offset", b)
        object.__setattr__(self, "vacuous", zero)

    def value(self, u) -> float:
        """``normal @ u - offset``; positive means violated."""
        return float(self.normal @ _vec(u, "u") - self.offset)


def discrete_cbf_residual(h_next: float, h_curr: float, eta: float) -> float:
    """``h_next - (1 - eta) * h_curr``; nonnegative when the condition holds."""
    _check_eta(eta)
    return h_next - (1.0 - eta) * h_curr


def affine_cbf_L(cbf: AffineCbf, sys: ControlAffineStep, x, u, d, eta: float) -> float:
    """Direct evaluation of the affine-CBF constraint function (``<= 0`` is safe)."""
    _check_eta(eta)
    x = _vec(x, "x")
    x_next = sys.next_state(x, u, d)
    return float(-(cbf.p @ x_next + cbf.q) + (1.0 - eta) * (cbf.p @ x + cbf.q))


def affine_cbf_halfplane(
    cbf: AffineCbf, sys: ControlAffineStep, x, d, eta: float
) -> HalfPlaneConstraint:
    _check_eta(eta)
    x = _vec(x, "x")
    d = _vec(d, "d")
    if not (cbf.p.size == x.size == d.size):
        raise ValueError(
            f"dimension mismatch: p={cbf.p.size}, x={x.size}, d={d.size}"
        )
    fx = sys.f(x)
    gx = sys.g(x)
    if fx.size != x.size or gx.shape[0] != x.size:
        raise ValueError("drift/input_gain dimensions disagree with the state")
    a = -(gx.T @ cbf.p)
    b = cbf.p @ (fx + d) + cbf.q - (1.0 - eta) * (cbf.p @ x + cbf.q)
    return HalfPlaneConstraint(a, b)


def _sq_dist_margin(pos, x_o, d, r_s) -> float:
    diff = pos - x_o - d
    return float(diff @ diff) - r_s


def obstacle_cbf_L(
    sys: ControlAffineStep, x, u, x_o, d, r_s: float, eta: float
) -> float:
    """Obstacle-avoidance constraint function for ``h(x) = |x - x_obs|^2 - r_s``.

    Built as ``-(h(x+) - h(x)) - eta*h(x)`` with ``x+ = f(x) + g(x) u`` and the
    obstacle stationary at ``x_o + d``. Concave in ``u``, so it is only used
    for evaluation and never passed to the convex solver.
    """
    _check_eta(eta)
    x = _vec(x, "x")
    x_o = _vec(x_o, "x_o")
    d = _vec(d, "d")
    x_next = sys.next_state(x, u)
    h_now = _sq_dist_margin(x, x_o, d, r_s)
    h_next = _sq_dist_margin(x_next, x_o, d, r_s)
    return -(h_next - h_now) - eta * h_now


def obstacle_cbf_L_printed(
    sys: ControlAffineStep, x, u, x_o, d, r_s: float, eta: float
) -> float:
    """Legacy evaluator: the literal textbook grouping, kept for comparison.

    ``-[|x+ - x_o - d|^2 - r_s] + (1 - eta)|x - x_o - d|^2 - r_s``. Differs
    from :func:`obstacle_cbf_L` by ``-eta * r_s``.
    """
    _check_eta(eta)
    x = _vec(x, "x")
    x_o = _vec(x_o, "x_o")
    d = _vec(d, "d")
    x_next = sys.next_state(x, u)
    nxt = x_next - x_o - d
    now = x - x_o - d
    return float(-(nxt @ nxt - r_s) + (1.0 - eta) * (now @ now) - r_s)


def _displaced(r, cbf: SuperEllipsoidCbf, d) -> np.ndarray:
    return np.asarray(r, dtype=float) - cbf.obstacle_nominal - d


def superellipsoid_h(r, rdot, cbf: SuperEllipsoidCbf, d: float = 0.0) -> float:
    """Barrier value at position ``r`` for scalar obstacle offset ``d``.

    ``rdot`` is accepted for signature symmetry with :func:`ecbf_halfplane`
    and is ignored.
    """
    r = _vec(r, "r")
    if r.size != cbf.dim:
        raise ValueError(f"position has dimension {r.size}, cbf expects {cbf.dim}")
    e = _displaced(r, cbf, d) / cbf.shape
    return float(np.sum(e**4) - cbf.safety_margin)


def superellipsoid_h_batch(r, cbf: SuperEllipsoidCbf, ds) -> np.ndarray:
    """Vectorized barrier over an array of scalar offsets ``ds``."""
    ds = np.asarray(ds, dtype=float).reshape(-1, 1)
    e = (np.asarray(r, dtype=float)[None, :] - cbf.obstacle_nominal[None, :] - ds) / cbf.shape
    return np.sum(e**4, axis=1) - cbf.safety_margin


def ecbf_halfplanes(
    r, rdot, cbf: SuperEllipsoidCbf, ds, params: EcbfParams
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ECBF constraints for many obstacle offsets.

    Returns ``(A, b)`` with one row ``A[i] @ u <= b[i]`` per entry of ``ds``.
    Assumes double-integrator dynamics (acceleration is the input).
    """
    r = _vec(r, "r")
    rdot = _vec(rdot, "rdot")
    if r.size != cbf.dim or rdot.size != cbf.dim:
        raise ValueError("position/velocity dimension disagrees with the cbf")
    ds = np.asarray(ds, dtype=float).reshape(-1, 1)
    s4 = cbf.shape**4
    e = r[None, :] - cbf.obstacle_nominal[None, :] - ds
    e2 = e * e
    h = np.sum(e2 * e2 / s4, axis=1) - cbf.safety_margin
    grad = 4.0 * e2 * e / s4  # dh/dr, one row per offset
    curv = 12.0 * e2 / s4  # diagonal of the Hessian of h
    q = params.k1 * h + params.k2 * (grad @ rdot) + curv @ (rdot * rdot)
    return -grad, q


def ecbf_halfplane(
    r, rdot, cbf: SuperEllipsoidCbf, d: float, params: EcbfParams
) -> HalfPlaneConstraint:
    A, b = ecbf_halfplanes(r, rdot, cbf, [d], params)
    return HalfPlaneConstraint(A[0], b[0])


def eta_lower_bound(m_lo: float, m_hi: float) -> float:
    """Smallest decay rate ``eta`` keeping every sample feasible when the
    barrier stays within ``[m_lo, m_hi]``."""
    if m_hi <= 0 or m_lo < 0 or m_lo >= m_hi:
        raise ValueError(f"need m_hi > m_lo >= 0, got m_lo={m_lo}, m_hi={m_hi}")
    return 1.0 - m_lo / m_hi


def stack_halfplanes(constraints: Sequence[HalfPlaneConstraint]) -> tuple[np.ndarray, np.ndarray]:
    """Stack constraints into ``(A, b)`` arrays."""
    if not constraints:
        raise ValueError("no constraints to stack")
    A = np.vstack([c.normal for c in constraints])
    b = np.array([c.offset for c in constraints])
    return A, b
