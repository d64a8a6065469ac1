"""Brute-force reference implementations, used by the test suite only.

Nothing here imports from the rest of the package: each function is an
independent route to a quantity the production code computes.
"""
import itertools
import math

import numpy as np

MAX_BRUTE_ASSIGNMENT = 8
MAX_BRUTE_DTW = 4


def brute_assignment(cost):
    """Exhaustive minimum over all permutations; first (lexicographic) minimiser wins."""
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise ValueError("cost matrix must be square")
    if n > MAX_BRUTE_ASSIGNMENT:
        raise ValueError(f"brute force limited to N <= {MAX_BRUTE_ASSIGNMENT}")
    best, best_perm = math.inf, None
    for perm in itertools.permutations(range(n)):
        total = math.fsum(cost[i][perm[i]] for i in range(n))
        if total < best:
            best, best_perm = total, perm
    if best_perm is None:
        return (), 0.0
    return best_perm, best


def _monotone_paths(n, m):
    # every warping path from (0,0) to (n-1,m-1) with unit steps
    def walk(i, j):
        if (i, j) == (n - 1, m - 1):
            yield [(i, j)]
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            a, b = i + di, j + dj
            if a < n and b < m:
                for rest in walk(a, b):
                    yield [(i, j)] + rest

    return walk(0, 0)


def brute_dtw(a, b):
    """DTW by enumerating every monotone alignment (T <= 4).

    Local cost is the squared Euclidean distance; the returned value is the
    square root of the cheapest path's summed cost.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if max(len(a), len(b)) > MAX_BRUTE_DTW:
        raise ValueError(f"brute force limited to T <= {MAX_BRUTE_DTW}")
    best = math.inf
    for path in _monotone_paths(len(a), len(b)):
        total = 0.0
        for i, j in path:
            total += sum((a[i][k] - b[j][k]) ** 2 for k in range(a.shape[1]))
        best = min(best, total)
    return math.sqrt(best)


def fd_gradient(f, theta, h=1e-4):
    """Central finite differences, one coordinate at a time."""
    theta = np.array(theta, dtype=float)
    grad = np.zeros_like(theta)
    flat = theta.reshape(-1)
    g = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        up = f(theta)
        flat[k] = orig - h
        down = f(theta)
        flat[k] = orig
        g[k] = (up - down) / (2 * h)
    return grad


def covariance_trace(vectors):
    """Trace of the 1/n empirical covariance, via an explicit double loop."""
    vectors = np.asarray(vectors, dtype=float)
    n, d = vectors.shape
    total = 0.0
    for k in range(d):
        mean = sum(vectors[i][k] for i in range(n)) / n
        total += sum((vectors[i][k] - mean) ** 2 for i in range(n)) / n
    return total


def straight_forward(params_by_layer, inputs):
    """Re-derive an MLP forward pass from per-layer ``(W, b)`` lists with explicit loops."""
    lam, alpha = 1.0507009873554805, 1.6732632423543772
    h = [list(map(float, row)) for row in np.atleast_2d(inputs)]
    for k, (w, b) in enumerate(params_by_layer):
        out = []
        for row in h:
            z = [b[j] + sum(row[i] * w[i][j] for i in range(len(row))) for j in range(len(b))]
            if k != len(params_by_layer) - 1:
                z = [lam * v if v > 0 else lam * alpha * (math.exp(v) - 1) for v in z]
            out.append(z)
        h = out
    return np.array(h)
