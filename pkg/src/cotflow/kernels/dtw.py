"""Accumulated-cost table for dynamic time warping (symmetric1 steps).

``acc[i, j] = local[i, j] + min(acc[i-1, j-1], acc[i-1, j], acc[i, j-1])``.
The numba path fills the table row by row; the numpy path sweeps
anti-diagonals, whose cells depend only on the two previous diagonals.
"""
import numpy as np

from .. import _accel
from .._accel import njit


def _local_cost(a, b):
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _accumulate_loops(a, b):
    n = a.shape[0]
    m = b.shape[0]
    d = a.shape[1]
    acc = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            c = 0.0
            for k in range(d):
                t = a[i, k] - b[j, k]
                c += t * t
            if i == 0 and j == 0:
                acc[i, j] = c
            elif i == 0:
                acc[i, j] = c + acc[i, j - 1]
            elif j == 0:
                acc[i, j] = c + acc[i - 1, j]
            else:
                best = acc[i - 1, j - 1]
                if acc[i - 1, j] < best:
                    best = acc[i - 1, j]
                if acc[i, j - 1] < best:
                    best = acc[i, j - 1]
                acc[i, j] = c + best
    return acc


def _accumulate_numpy(a, b):
    n, m = a.shape[0], b.shape[0]
    local = _local_cost(a, b)
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for s in range(n + m - 1):
        i = np.arange(max(0, s - m + 1), min(n, s + 1))
        j = s - i
        best = np.minimum(np.minimum(acc[i, j], acc[i, j + 1]), acc[i + 1, j])
        acc[i + 1, j + 1] = local[i, j] + best
    return acc[1:, 1:]


_accumulate_jit = njit(cache=True)(_accumulate_loops)


def accumulated_cost(a, b):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if _accel.USE_NUMBA:
        return _accumulate_jit(a, b)
    return _accumulate_numpy(a, b)


def _backtrack_loops(acc):
    n, m = acc.shape
    i, j = n - 1, m - 1
    out = np.empty((n + m, 2), dtype=np.int64)
    k = 0
    out[k, 0] = i
    out[k, 1] = j
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            # prefer the diagonal, then the vertical, then the horizontal move
            diag = acc[i - 1, j - 1]
            up = acc[i - 1, j]
            left = acc[i, j - 1]
            if diag <= up and diag <= left:
                i -= 1
                j -= 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        k += 1
        out[k, 0] = i
        out[k, 1] = j
    return out[:k + 1][::-1].copy()


_backtrack_jit = njit(cache=True)(_backtrack_loops)


def warping_path(acc):
    """Optimal alignment as an ``(L, 2)`` array of index pairs, start to end."""
    acc = np.ascontiguousarray(acc, dtype=np.float64)
    if _accel.USE_NUMBA:
        return _backtrack_jit(acc)
    return _backtrack_loops(acc)
