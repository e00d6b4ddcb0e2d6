"""Compiled numerical kernels.

Every kernel here fixes its floating-point summation order so results do
not depend on batch composition, row position or input ordering.
"""
import numpy as np
from numba import njit

_EPS = np.finfo(np.float64).eps


@njit(cache=True)
def jacobi_eigh(a, max_sweeps=100):
    """Cyclic Jacobi eigensolver for a dense symmetric matrix.

    Returns ``(eigenvalues, eigenvectors, sweeps)`` with eigenvalues in
    ascending order. Off-diagonal entries that are negligible relative to
    their diagonal pair are zeroed instead of rotated, which gives small
    eigenvalues relative (not just absolute) accuracy.
    """
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    sweeps = 0
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                if abs(apq) <= _EPS * np.sqrt(abs(a[p, p] * a[q, q])):
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    continue
                rotated = True
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
        sweeps = sweep + 1
        if not rotated:
            break
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i]
    order = np.argsort(w)
    return w[order], v[:, order], sweeps


@njit(cache=True)
def dense_forward(x, w, b):
    """``x @ w + b`` with a fixed per-element summation order over inputs."""
    n, k = x.shape
    m = w.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(k):
            xij = x[i, j]
            if xij == 0.0:
                continue
            for c in range(m):
                out[i, c] += xij * w[j, c]
        for c in range(m):
            out[i, c] += b[c]
    return out


@njit(cache=True)
def _segment_sorted_sum_t(vt, indptr, members):
    width = vt.shape[0]
    nseg = indptr.shape[0] - 1
    longest = 0
    for s in range(nseg):
        longest = max(longest, indptr[s + 1] - indptr[s])
    buf = np.empty(max(longest, 1))
    out = np.zeros((nseg, width))
    for s in range(nseg):
        lo = indptr[s]
        k = indptr[s + 1] - lo
        if k == 0:
            continue
        for c in range(width):
            row = vt[c]
            if k <= 2:
                # two-term IEEE addition is commutative
                acc = row[members[lo]]
                if k == 2:
                    acc += row[members[lo + 1]]
                out[s, c] = acc
                continue
            if k <= 32:
                for r in range(k):
                    x = row[members[lo + r]]
                    j = r - 1
                    while j >= 0 and buf[j] > x:
                        buf[j + 1] = buf[j]
                        j -= 1
                    buf[j + 1] = x
            else:
                for r in range(k):
                    buf[r] = row[members[lo + r]]
                buf[:k].sort()
            acc = 0.0
            for r in range(k):
                acc += buf[r]
            out[s, c] = acc
    return out


def segment_sorted_sum(values, indptr, members):
    """Sum rows of ``values`` per segment, adding each column in sorted order.

    Segment ``s`` owns rows ``members[indptr[s]:indptr[s + 1]]``. Sorting
    before the sequential sum makes the result independent of row order.
    """
    return _segment_sorted_sum_t(np.ascontiguousarray(values.T), indptr, members)
