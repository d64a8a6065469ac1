"""Evaluation metrics: empirical W2^2, DTW, DBA barycenters, trajectory variance."""
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import ot
from .kernels import dtw as _dtw


@dataclass
class MetricsRecord:
    task: str = ""
    coupling: str = ""
    solver: str = ""
    nfe: int = 0
    seed: int = 0
    w2_squared: Optional[float] = None
    tv: Optional[float] = None
    straightness: Optional[float] = None
    n_samples: int = 0

    def __post_init__(self):
        for name in ("w2_squared", "tv", "straightness"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ValueError(f"{name} must be >= 0, got {val}")
        if self.nfe < 0 or self.n_samples < 0:
            raise ValueError("nfe and n_samples must be >= 0")

    def as_dict(self):
        return asdict(self)


def w2_squared(a, b):
    """Squared 2-Wasserstein distance between two equal-size uniform point sets."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape != b.shape:
        raise ValueError(f"point sets must have equal shape, got {a.shape} and {b.shape}")
    if len(a) == 0:
        raise ValueError("empty point sets")
    plan = ot.solve_assignment(ot.sq_dist_matrix(a, b))
    return plan.total_cost / len(a)


def conditional_w2_squared(a, b, labels_a, labels_b):
    """Per-label W2^2 for sets sharing the same label multiset."""
    labels_a = np.asarray(labels_a).ravel()
    labels_b = np.asarray(labels_b).ravel()
    out = {}
    for lab in np.unique(labels_b):
        ia, ib = labels_a == lab, labels_b == lab
        if ia.sum() != ib.sum():
            raise ValueError(f"label {lab!r} has {ia.sum()} vs {ib.sum()} points")
        out[lab.item()] = w2_squared(np.asarray(a)[ia], np.asarray(b)[ib])
    return out


def _traj(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or len(a) == 0:
        raise ValueError("a trajectory is a non-empty (T, d) array")
    if not np.all(np.isfinite(a)):
        raise ValueError("trajectory has non-finite entries")
    return a


def dtw_squared(a, b):
    a, b = _traj(a), _traj(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return float(_dtw.accumulated_cost(a, b)[-1, -1])


def dtw(a, b):
    """DTW distance: square root of the cheapest summed squared-Euclidean alignment."""
    return float(np.sqrt(dtw_squared(a, b)))


def dtw_path(a, b):
    a, b = _traj(a), _traj(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    acc = _dtw.accumulated_cost(a, b)
    return _dtw.warping_path(acc), float(acc[-1, -1])


def _resample(traj, length):
    if len(traj) == length:
        return traj.copy()
    src = np.linspace(0.0, 1.0, len(traj))
    dst = np.linspace(0.0, 1.0, length)
    return np.stack([np.interp(dst, src, traj[:, k]) for k in range(traj.shape[1])], axis=1)


def medoid_index(trajs):
    n = len(trajs)
    d2 = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d2[i, j] = d2[j, i] = dtw_squared(trajs[i], trajs[j])
    return int(np.argmin(d2.sum(axis=1)))


def dba_objective(trajs, bary):
    return float(sum(dtw_squared(t, bary) for t in trajs))


def dba_barycenter(trajs, length=None, max_iter=30, seed=None, tol=1e-8, return_history=False):
    """DTW barycenter averaging started from the medoid.

    Each round aligns every trajectory to the current barycenter and replaces
    each barycenter point with the mean of the points aligned to it. Stops
    when the summed squared DTW changes by less than ``tol``. The medoid start
    is deterministic; ``seed`` is accepted for interface compatibility only.
    """
    trajs = [_traj(t) for t in trajs]
    if not trajs:
        raise ValueError("empty trajectory set")
    dim = trajs[0].shape[1]
    if any(t.shape[1] != dim for t in trajs):
        raise ValueError("trajectories must share a dimension")
    bary = trajs[medoid_index(trajs)] if len(trajs) > 1 else trajs[0]
    bary = _resample(bary, length or len(bary))
    history = [dba_objective(trajs, bary)]
    for _ in range(max_iter):
        sums = np.zeros_like(bary)
        counts = np.zeros(len(bary))
        for t in trajs:
            path, _ = dtw_path(t, bary)
            np.add.at(sums, path[:, 1], t[path[:, 0]])
            np.add.at(counts, path[:, 1], 1.0)
        bary = sums / counts[:, None]
        history.append(dba_objective(trajs, bary))
        if abs(history[-2] - history[-1]) < tol:
            break
    if return_history:
        return bary, history
    return bary


def trajectory_variance(trajs, length=None, max_iter=30):
    """Mean squared DTW distance from each trajectory to the DBA barycenter."""
    trajs = [_traj(t) for t in trajs]
    if not trajs:
        raise ValueError("empty trajectory set")
    bary = dba_barycenter(trajs, length=length, max_iter=max_iter)
    return dba_objective(trajs, bary) / len(trajs)
