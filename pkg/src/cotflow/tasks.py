"""Seeded generators for the synthetic conditional tasks.

* ``moons``: two interleaved half circles, condition 0 (upper) / 1 (lower);
  source distribution is a ring of eight Gaussians.
* ``fork``: 1-D ``y`` given 1-D ``x``; ``y = 0`` for ``x <= 0`` and ``y = +-x``
  with equal probability otherwise. Source is N(0, 1).
* ``traj_fork``: 2-D polylines from the origin to ``(1, +1)`` or ``(1, -1)``,
  flattened to ``2*T`` numbers. The condition (start point) is constant, so
  the two modes cannot be separated by conditioning.
"""
from dataclasses import dataclass, field

import numpy as np

from .coupling import NoiseSpec


@dataclass
class ConditionedDataset:
    samples: np.ndarray          # (N, d)
    conditions_raw: np.ndarray   # (N, q)
    name: str
    prior: NoiseSpec
    metadata: dict = field(default_factory=dict)
    labels: np.ndarray = None    # generator-side mode/component labels, if any

    def __post_init__(self):
        if len(self.samples) != len(self.conditions_raw):
            raise ValueError("samples and conditions must have the same number of rows")

    def __len__(self):
        return len(self.samples)

    @property
    def dim(self):
        return self.samples.shape[1]

    @property
    def cond_dim(self):
        return self.conditions_raw.shape[1]


def gen_moons(n, seed, noise=0.05, scale=3.0, ring_radius=8.0, ring_std=0.5):
    if n < 2:
        raise ValueError("moons needs n >= 2")
    rng = np.random.default_rng(seed)
    n_top = n - n // 2
    labels = np.zeros(n, dtype=np.int64)
    labels[n_top:] = 1
    labels = labels[rng.permutation(n)]
    theta = rng.uniform(0.0, np.pi, size=n)
    top = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    bottom = np.stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)], axis=1)
    pts = np.where(labels[:, None] == 0, top, bottom)
    pts = pts + noise * rng.standard_normal((n, 2))
    pts *= scale
    meta = dict(n=n, seed=seed, noise=noise, scale=scale, radius=1.0, offset=0.5,
                ring_radius=ring_radius, ring_std=ring_std)
    prior = NoiseSpec(2, "eight_gaussians", radius=ring_radius, std=ring_std)
    return ConditionedDataset(pts, labels[:, None].astype(np.float64), "moons",
                              prior, meta, labels)


def moons_centroids(scale=3.0):
    """Analytic per-label means of the noiseless, uniformly parameterised moons."""
    k = 2.0 / np.pi
    return np.array([[0.0, k], [1.0, 0.5 - k]]) * scale


def gen_fork(n, seed, x_low=-2.0, x_high=2.0):
    if n < 1:
        raise ValueError("fork needs n >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(x_low, x_high, size=n)
    sign = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    y = np.where(x > 0, sign * x, 0.0)
    labels = np.where(x > 0, np.where(sign > 0, 1, 2), 0)
    meta = dict(n=n, seed=seed, x_low=x_low, x_high=x_high)
    return ConditionedDataset(y[:, None], x[:, None], "fork", NoiseSpec(1), meta, labels)


def gen_traj_fork(n, horizon, seed, sigma=0.02):
    if n < 2 or horizon < 2:
        raise ValueError("traj_fork needs n >= 2 and horizon >= 2")
    rng = np.random.default_rng(seed)
    mode = (rng.random(n) < 0.5).astype(np.int64)
    end = np.stack([np.ones(n), np.where(mode == 1, 1.0, -1.0)], axis=1)
    frac = np.linspace(0.0, 1.0, horizon)
    traj = frac[None, :, None] * end[:, None, :]
    jitter = sigma * rng.standard_normal((n, horizon, 2))
    jitter[:, 0, :] = 0.0
    traj = traj + jitter
    cond = np.zeros((n, 2))
    meta = dict(n=n, seed=seed, horizon=horizon, sigma=sigma)
    return ConditionedDataset(traj.reshape(n, 2 * horizon), cond, "traj_fork",
                              NoiseSpec(2 * horizon), meta, mode)


def as_trajectories(samples, dim=2):
    samples = np.asarray(samples, dtype=np.float64)
    return samples.reshape(len(samples), -1, dim)


# name -> (generator, default params, default K, use_pca)
TASKS = {
    "moons": (gen_moons, {}, 2, False),
    "fork": (gen_fork, {}, 2, False),
    "traj_fork": (gen_traj_fork, {"horizon": 8}, 1, False),
}


def make_task(name, n, seed, **params):
    try:
        gen, defaults = TASKS[name][:2]
    except KeyError:
        raise ValueError(f"unknown task {name!r}; choose from {sorted(TASKS)}") from None
    kwargs = {**defaults, **params}
    return gen(n, seed=seed, **kwargs)


def default_clusters(name):
    return TASKS[name][2] if name in TASKS else 64
