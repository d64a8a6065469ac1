"""Condition encoder (PCA) and discretiser (k-means centroids).

Both are fitted once on the full dataset before training. During pairing a
raw condition is mapped to ``discretize(encode(o))``, i.e. the centroid of
its cluster in PCA space.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class PcaEncoder:
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    singular_values: np.ndarray
    n_fit: int = 0

    @property
    def k(self):
        return self.components.shape[0]

    @property
    def explained_variance(self):
        n = self.n_fit
        return self.singular_values ** 2 / max(n - 1, 1)


def fit_pca(data, k=100) -> PcaEncoder:
    """Top-``k`` right singular vectors of the centred data.

    Each component's largest-magnitude entry is made positive. ``k`` above
    ``min(N, d)`` is clipped with a warning.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError("fit_pca needs an (N, d) array with N >= 2")
    n, d = data.shape
    limit = min(n, d)
    if k > limit:
        log.warning("PCA dimension %d clipped to min(N, d) = %d", k, limit)
        k = limit
    mean = data.mean(axis=0)
    _, s, vt = np.linalg.svd(data - mean, full_matrices=False)
    comps = vt[:k].copy()
    pivot = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(k), pivot])
    signs[signs == 0] = 1.0
    comps *= signs[:, None]
    return PcaEncoder(mean, comps, s[:k].copy(), n_fit=n)


def encode(enc: PcaEncoder, o):
    o = np.asarray(o, dtype=np.float64)
    if o.shape[-1] != enc.mean.shape[0]:
        raise ValueError(f"expected condition dim {enc.mean.shape[0]}, got {o.shape[-1]}")
    return (o - enc.mean) @ enc.components.T


def decode(enc: PcaEncoder, e):
    return np.asarray(e, dtype=np.float64) @ enc.components + enc.mean


@dataclass
class KMeansDiscretizer:
    centroids: np.ndarray  # (K, k)
    inertia: float
    seed: int
    n_iter: int = 0
    inertia_history: tuple = ()

    @property
    def K(self):
        return self.centroids.shape[0]


def _sq_dists(points, centroids):
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeans_pp(points, K, rng):
    n = len(points)
    centroids = np.empty((K, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    closest = np.sum((points - centroids[0]) ** 2, axis=1)
    for k in range(1, K):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centroids[k] = points[idx]
        closest = np.minimum(closest, np.sum((points - centroids[k]) ** 2, axis=1))
    return centroids


def assign_clusters(points, centroids):
    # argmin returns the first minimiser, so ties go to the lowest index
    return np.argmin(_sq_dists(points, centroids), axis=1)


def fit_kmeans(points, K, seed=0, max_iter=100, tol=1e-6) -> KMeansDiscretizer:
    """k-means++ seeding followed by Lloyd iterations.

    Stops once no centroid moves more than ``tol`` or after ``max_iter``
    rounds. A cluster that empties is re-seeded at the point farthest from
    its current centroid.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if K < 1:
        raise ValueError("K must be >= 1")
    if n < K:
        raise ValueError(f"need at least K={K} points, got {n}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(points, K, rng)
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dists(points, centroids)
        labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(n), labels].sum()))
        new = centroids.copy()
        for k in range(K):
            members = labels == k
            if members.any():
                new[k] = points[members].mean(axis=0)
            else:
                far = int(np.argmax(d2[np.arange(n), labels]))
                new[k] = points[far]
                labels[far] = k
        shift = np.max(np.linalg.norm(new - centroids, axis=1))
        centroids = new
        if shift < tol:
            break
    d2 = _sq_dists(points, centroids)
    inertia = float(d2.min(axis=1).sum())
    history.append(inertia)
    return KMeansDiscretizer(centroids, inertia, int(seed), it, tuple(history))


def discretize(disc: KMeansDiscretizer, e):
    """Nearest centroid (Euclidean); ties to the lowest centroid index."""
    e = np.asarray(e, dtype=np.float64)
    single = e.ndim == 1
    pts = e[None, :] if single else e
    if pts.shape[1] != disc.centroids.shape[1]:
        raise ValueError(f"expected dim {disc.centroids.shape[1]}, got {pts.shape[1]}")
    out = disc.centroids[assign_clusters(pts, disc.centroids)]
    return out[0] if single else out


@dataclass
class ConditionProcessor:
    """Encoder + discretiser pair. ``passthrough_dims`` trailing columns of the
    raw condition skip PCA and are appended to the encoding unchanged."""

    discretizer: KMeansDiscretizer
    encoder: Optional[PcaEncoder] = None
    passthrough_dims: int = 0

    def embed(self, o):
        o = np.asarray(o, dtype=np.float64)
        if o.ndim == 1:
            o = o[:, None]
        if self.encoder is None:
            return o
        split = o.shape[1] - self.passthrough_dims
        e = encode(self.encoder, o[:, :split])
        return np.concatenate([e, o[:, split:]], axis=1)

    def __call__(self, o):
        return discretize(self.discretizer, self.embed(o))

    def labels(self, o):
        return assign_clusters(self.embed(o), self.discretizer.centroids)


def fit_condition_processor(conditions, K, seed=0, use_pca=False, pca_dim=100,
                            passthrough_dims=0) -> ConditionProcessor:
    conditions = np.asarray(conditions, dtype=np.float64)
    if conditions.ndim == 1:
        conditions = conditions[:, None]
    encoder = None
    if use_pca:
        split = conditions.shape[1] - passthrough_dims
        encoder = fit_pca(conditions[:, :split], pca_dim)
    proc = ConditionProcessor(None, encoder, passthrough_dims)
    proc.discretizer = fit_kmeans(proc.embed(conditions), K, seed)
    return proc
