"""Exact minibatch optimal transport between equal-size uniform batches.

With uniform weights and equal batch sizes the earth mover's problem has a
permutation optimum, so it reduces to linear assignment.
"""
import math
from dataclasses import dataclass

import numpy as np

from .kernels.assignment import linear_assignment


@dataclass(frozen=True)
class CostSpec:
    """How the condition weight is chosen: a fixed value, or per batch."""

    mode: str = "auto"
    gamma: float = 0.0
    multiplier: float = 10.0

    def __post_init__(self):
        if self.mode not in ("fixed", "auto"):
            raise ValueError(f"gamma mode must be 'fixed' or 'auto', got {self.mode!r}")
        if self.mode == "fixed" and not self.gamma >= 0:
            raise ValueError("fixed gamma must be >= 0")
        if self.mode == "auto" and not self.multiplier > 0:
            raise ValueError("auto multiplier must be > 0")

    @classmethod
    def fixed(cls, gamma):
        return cls(mode="fixed", gamma=float(gamma))

    @classmethod
    def auto(cls, multiplier=10.0):
        return cls(mode="auto", multiplier=float(multiplier))


@dataclass
class CouplingPlan:
    """Row ``i`` of the source batch is paired with row ``assignment[i]`` of the target."""

    assignment: np.ndarray
    total_cost: float

    @property
    def n(self):
        return len(self.assignment)

    def inverse(self):
        inv = np.empty_like(self.assignment)
        inv[self.assignment] = np.arange(self.n)
        return inv

    def coupling_matrix(self):
        pi = np.zeros((self.n, self.n))
        pi[np.arange(self.n), self.assignment] = 1.0 / self.n
        return pi


def _as_vec(a):
    return np.atleast_1d(np.asarray(a, dtype=np.float64)).ravel()


def cost_unconditional(x0, x1):
    x0, x1 = _as_vec(x0), _as_vec(x1)
    if x0.shape != x1.shape:
        raise ValueError(f"dimension mismatch: {x0.shape} vs {x1.shape}")
    d = x0 - x1
    return float(d @ d)


def cost_conditional(x0, c0, x1, c1, gamma):
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    c0, c1 = _as_vec(c0), _as_vec(c1)
    if c0.shape != c1.shape:
        raise ValueError(f"condition dimension mismatch: {c0.shape} vs {c1.shape}")
    dc = c0 - c1
    return cost_unconditional(x0, x1) + gamma * gamma * float(dc @ dc)


def _rows(a, n=None):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None] if n is None or a.shape[0] == n else a[None, :]
    return a


def sq_dist_matrix(a, b):
    """Pairwise squared Euclidean distances between the rows of ``a`` and ``b``."""
    a, b = _rows(a), _rows(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    # explicit differences rather than the |a|^2 - 2ab + |b|^2 expansion:
    # exact zeros on the diagonal matter for the tie-breaking tests
    out = np.zeros((a.shape[0], b.shape[0]))
    for k in range(a.shape[1]):
        diff = a[:, k, None] - b[None, :, k]
        out += diff * diff
    return out


def cost_matrix(x0, x1):
    return sq_dist_matrix(x0, x1)


def conditional_cost_matrix(x0, c0, x1, c1, gamma):
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    return sq_dist_matrix(x0, x1) + (gamma * gamma) * sq_dist_matrix(c0, c1)


def auto_gamma(x0, c0, x1, c1, multiplier=10.0):
    """Per-batch weight from the index-aligned pairs.

    ``multiplier * sum_i |x0_i - x1_i|^2 / sum_j |c0_j - c1_j|^2``; zero when all
    aligned conditions coincide.
    """
    x0, x1, c0, c1 = _rows(x0), _rows(x1), _rows(c0), _rows(c1)
    if len(x0) == 0:
        raise ValueError("empty batch")
    if not (len(x0) == len(x1) == len(c0) == len(c1)):
        raise ValueError("batches must have equal length")
    num = float(np.sum((x0 - x1) ** 2))
    den = float(np.sum((c0 - c1) ** 2))
    if den == 0.0:
        return 0.0
    return multiplier * num / den


def normalized_gamma(x0, c0, x1, c1, gamma):
    """Raw cost weight for a scale-free ``gamma``.

    Dividing the sample and condition terms by their mean pairwise costs gives
    ``|dx|^2/sx + gamma^2 |dc|^2/sc``, which is proportional to the raw cost
    with weight ``gamma * sqrt(sx / sc)``.
    """
    sx = float(np.mean(sq_dist_matrix(x0, x1)))
    sc = float(np.mean(sq_dist_matrix(c0, c1)))
    if sc == 0.0:
        return 0.0
    return gamma * math.sqrt(sx / sc)


def resolve_gamma(spec: CostSpec, x0, c0, x1, c1):
    if spec.mode == "fixed":
        return spec.gamma
    return auto_gamma(x0, c0, x1, c1, spec.multiplier)


def solve_assignment(cost) -> CouplingPlan:
    """Minimum-cost permutation; ties go to the lexicographically smallest one."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")
    if np.any(cost < 0):
        raise ValueError("cost matrix must be non-negative")
    perm, _, _ = linear_assignment(cost)
    total = math.fsum(cost[np.arange(len(perm)), perm])
    return CouplingPlan(perm, total)
