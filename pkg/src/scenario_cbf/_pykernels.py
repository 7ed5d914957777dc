"""Pure Python/numpy versions of the compiled kernels in ``_ckernels.pyx``.

Same signatures and return conventions; used when the extension is not
built or when ``SCENARIO_CBF_PURE_PYTHON`` is set.
"""
from __future__ import annotations

import numpy as np


def most_violated(A, b, x, inv_norm):
    if A.shape[0] == 0:
        return -1, -np.inf
    s = (A @ x - b) * inv_norm
    i = int(np.argmax(s))
    return i, float(s[i])


def _meet(nx, ny, b, i, j):
    det = nx[i] * ny[j] - ny[i] * nx[j]
    if abs(det) < 1e-15:
        return None
    return ((b[i] * ny[j] - ny[i] * b[j]) / det,
            (nx[i] * b[j] - b[i] * nx[j]) / det)


def halfplane_cycle(nx, ny, b, tol):
    nx, ny, b = nx.tolist(), ny.tolist(), b.tolist()
    dq: list[int] = []
    head = 0
    for i in range(len(nx)):
        ai, ci, bi = nx[i], ny[i], b[i]
        while len(dq) - head >= 2:
            pt = _meet(nx, ny, b, dq[-1], dq[-2])
            if pt is None:
                return None
            if ai * pt[0] + ci * pt[1] - bi > tol:
                dq.pop()
            else:
                break
        while len(dq) - head >= 2:
            pt = _meet(nx, ny, b, dq[head], dq[head + 1])
            if pt is None:
                return None
            if ai * pt[0] + ci * pt[1] - bi > tol:
                head += 1
            else:
                break
        dq.append(i)
    while len(dq) - head >= 3:
        pt = _meet(nx, ny, b, dq[-1], dq[-2])
        if pt is None:
            return None
        i = dq[head]
        if nx[i] * pt[0] + ny[i] * pt[1] - b[i] > tol:
            dq.pop()
        else:
            break
    while len(dq) - head >= 3:
        pt = _meet(nx, ny, b, dq[head], dq[head + 1])
        if pt is None:
            return None
        i = dq[-1]
        if nx[i] * pt[0] + ny[i] * pt[1] - b[i] > tol:
            head += 1
        else:
            break
    if len(dq) - head < 3:
        return None
    return np.array(dq[head:], dtype=np.intp)
