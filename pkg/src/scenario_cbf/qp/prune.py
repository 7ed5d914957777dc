"""Redundant-row removal ahead of the solve.

``exact-2d`` computes the polygon cut out of the box by all rows (angle
sort plus a deque sweep, O(N log N)) and keeps only rows that own an edge
of it. ``dominance`` works in any dimension but
only removes rows implied by a parallel tighter row or by the box.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import kernels
from ..cbf_core import HalfPlaneConstraint

MODES = ("exact-2d", "dominance")


def _box_redundant(A, b, lower, upper):
    """Rows satisfied everywhere on the box."""
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        return np.zeros(A.shape[0], dtype=bool)
    worst = np.maximum(A * lower, A * upper).sum(axis=1)
    return worst <= b


def prune_rows(A, b, lower, upper, mode: str = "exact-2d", tol: float = 1e-12,
               backend=None) -> np.ndarray:
    """Sorted indices of the rows of ``A u <= b`` that must be kept.

    The feasible region (intersected with the box) is unchanged. Empty
    regions are left unpruned so the solver can certify infeasibility.
    """
    if mode not in MODES:
        raise ValueError(f"unknown pruning mode {mode!r}; choose from {MODES}")
    A = np.ascontiguousarray(A, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    lower = np.ascontiguousarray(np.broadcast_to(lower, (A.shape[1],)), dtype=float)
    upper = np.ascontiguousarray(np.broadcast_to(upper, (A.shape[1],)), dtype=float)
    n = A.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.intp)
    if mode == "exact-2d":
        if A.shape[1] != 2:
            raise ValueError(f"exact-2d pruning needs 2 decision variables, got {A.shape[1]}")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("exact-2d pruning needs finite box bounds")
        return _prune_exact_2d(A, b, lower, upper, tol, backend or kernels)
    return _prune_dominance(A, b, lower, upper)


def _prune_exact_2d(A, b, lower, upper, tol, backend):
    n = A.shape[0]
    everything = np.arange(n)
    scale = 1.0 + float(np.max(np.abs(np.concatenate([lower, upper]))))
    norms = np.hypot(A[:, 0], A[:, 1])
    zero = norms == 0.0
    if np.any(b[zero] < 0.0):
        return everything

    # unit-normal rows, box edges appended with labels -1..-4
    live = np.flatnonzero(~zero)
    nx = np.concatenate([A[live, 0] / norms[live], [-1.0, 0.0, 1.0, 0.0]])
    ny = np.concatenate([A[live, 1] / norms[live], [0.0, -1.0, 0.0, 1.0]])
    off = np.concatenate([b[live] / norms[live], [-lower[0], -lower[1], upper[0], upper[1]]])
    label = np.concatenate([live, [-1, -2, -3, -4]])

    # sort by normal angle; among (numerically) equal angles keep the tightest
    ang = np.round(np.arctan2(ny, nx), 12)
    srt = np.lexsort((np.arange(ang.size), off, ang))
    first = np.ones(srt.size, dtype=bool)
    first[1:] = ang[srt[1:]] != ang[srt[:-1]]
    srt = srt[first]
    nx, ny, off, label = (np.ascontiguousarray(v[srt]) for v in (nx, ny, off, label))

    cyc = backend.halfplane_cycle(nx, ny, off, tol * scale)
    if cyc is None:
        return everything
    # polygon vertices: meet of consecutive boundary rows
    i, j = cyc, np.roll(cyc, -1)
    det = nx[i] * ny[j] - ny[i] * nx[j]
    if np.any(np.abs(det) < 1e-15):
        return everything
    vx = (off[i] * ny[j] - ny[i] * off[j]) / det
    vy = (nx[i] * off[j] - off[i] * nx[j]) / det
    # edge of row cyc[k] runs from vertex k-1 to vertex k
    lens = np.hypot(vx - np.roll(vx, 1), vy - np.roll(vy, 1))
    if lens.max(initial=0.0) <= 1e-9 * scale:
        return everything
    # guard against a spurious cycle: the vertex centroid must satisfy every row
    cx, cy = vx.mean(), vy.mean()
    if np.max(A[live] @ np.array([cx, cy]) - b[live], initial=-np.inf) > 1e-9 * scale * norms[live].max():
        return everything
    if cx < lower[0] or cx > upper[0] or cy < lower[1] or cy > upper[1]:
        return everything
    keep = label[cyc][(label[cyc] >= 0) & (lens > 1e-12 * scale)]
    return np.unique(keep)


def _prune_dominance(A, b, lower, upper):
    n = A.shape[0]
    norms = np.linalg.norm(A, axis=1)
    zero = norms == 0.0
    keep = np.ones(n, dtype=bool)
    keep[zero & (b >= 0)] = False
    keep[_box_redundant(A, b, lower, upper) & ~zero] = False

    safe = np.where(zero, 1.0, norms)
    dirs = np.round(A / safe[:, None], 12) + 0.0  # + 0.0 folds -0.0 into 0.0
    offs = b / safe
    cand = np.flatnonzero(keep & ~zero)
    if cand.size:
        _, group = np.unique(dirs[cand], axis=0, return_inverse=True)
        group = group.ravel()
        # lexsort: by group, then tightest offset, then lowest index
        srt = np.lexsort((cand, offs[cand], group))
        first = np.ones(srt.size, dtype=bool)
        first[1:] = group[srt[1:]] != group[srt[:-1]]
        keep[cand] = False
        keep[cand[srt[first]]] = True
    return np.flatnonzero(keep)


def prune_redundant(constraints: Sequence[HalfPlaneConstraint], bounds, mode: str = "exact-2d"):
    """Drop redundant half-planes.

    Returns ``(pruned, kept)`` where ``kept[i]`` is the original index of
    ``pruned[i]``.
    """
    constraints = list(constraints)
    if not constraints:
        return [], np.zeros(0, dtype=np.intp)
    A = np.vstack([c.normal for c in constraints])
    b = np.array([c.offset for c in constraints])
    lower, upper = bounds
    kept = prune_rows(A, b, lower, upper, mode)
    return [constraints[i] for i in kept], kept
