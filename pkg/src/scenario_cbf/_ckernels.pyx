# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops; see ``_pykernels`` for the reference versions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def most_violated(const double[:, ::1] A, const double[::1] b,
                  const double[::1] x, const double[::1] inv_norm):
    """Index and value of the largest normalized violation ``(A x - b) / |a|``.

    Ties resolve to the lowest index. Returns ``(-1, -inf)`` for an empty A.
    """
    cdef Py_ssize_t n = A.shape[0], m = A.shape[1]
    cdef Py_ssize_t i, j, best = -1
    cdef double s, best_val = -np.inf
    for i in range(n):
        s = -b[i]
        for j in range(m):
            s += A[i, j] * x[j]
        s *= inv_norm[i]
        if s > best_val:
            best_val = s
            best = i
    return best, best_val


cdef inline bint _meet(const double[::1] nx, const double[::1] ny,
                       const double[::1] b, Py_ssize_t i, Py_ssize_t j,
                       double* x, double* y) noexcept nogil:
    cdef double det = nx[i] * ny[j] - ny[i] * nx[j]
    if fabs(det) < 1e-15:
        return False
    x[0] = (b[i] * ny[j] - ny[i] * b[j]) / det
    y[0] = (nx[i] * b[j] - b[i] * nx[j]) / det
    return True


def halfplane_cycle(const double[::1] nx, const double[::1] ny,
                    const double[::1] b, double tol):
    """Deque sweep over unit-normal half-planes ``nx*u0 + ny*u1 <= b``.

    Rows must be sorted by normal angle with equal angles already merged.
    Returns the positions of the boundary rows in cyclic order, or ``None``
    when the sweep finds no bounded region.
    """
    cdef Py_ssize_t n = nx.shape[0]
    cdef cnp.intp_t[::1] dq = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t head = 0, tail = 0, i, p, q
    cdef double x, y
    for i in range(n):
        while tail - head >= 2:
            p = dq[tail - 1]; q = dq[tail - 2]
            if not _meet(nx, ny, b, p, q, &x, &y):
                return None
            if nx[i] * x + ny[i] * y - b[i] > tol:
                tail -= 1
            else:
                break
        while tail - head >= 2:
            p = dq[head]; q = dq[head + 1]
            if not _meet(nx, ny, b, p, q, &x, &y):
                return None
            if nx[i] * x + ny[i] * y - b[i] > tol:
                head += 1
            else:
                break
        dq[tail] = i
        tail += 1
    while tail - head >= 3:
        p = dq[tail - 1]; q = dq[tail - 2]
        if not _meet(nx, ny, b, p, q, &x, &y):
            return None
        i = dq[head]
        if nx[i] * x + ny[i] * y - b[i] > tol:
            tail -= 1
        else:
            break
    while tail - head >= 3:
        p = dq[head]; q = dq[head + 1]
        if not _meet(nx, ny, b, p, q, &x, &y):
            return None
        i = dq[tail - 1]
        if nx[i] * x + ny[i] * y - b[i] > tol:
            head += 1
        else:
            break
    if tail - head < 3:
        return None
    return np.asarray(dq[head:tail]).copy()
