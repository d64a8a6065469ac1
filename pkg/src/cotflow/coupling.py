"""Noise/data pairing for flow-matching minibatches.

Random-stream order is fixed for every strategy: the noise batch is drawn
first, then (conditional OT only) the condition permutation, then the
assignment is solved. Keeping this order lets a single-cluster conditional
pairing reproduce the plain OT pairing bit for bit.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ot

STRATEGIES = ("independent", "ot", "cot")


@dataclass(frozen=True)
class NoiseSpec:
    """Source distribution ``p0``.

    ``standard_gaussian`` is N(0, I). ``eight_gaussians`` is an equal-weight
    mixture of isotropic Gaussians (std ``std``) centred on a circle of radius
    ``radius``; it is only defined for ``dim == 2``.
    """

    dim: int
    kind: str = "standard_gaussian"
    radius: float = 8.0
    std: float = 0.5

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("noise dim must be >= 1")
        if self.kind not in ("standard_gaussian", "eight_gaussians"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "eight_gaussians" and self.dim != 2:
            raise ValueError("eight_gaussians noise is 2-dimensional")

    def sample(self, n, rng):
        if self.kind == "standard_gaussian":
            return rng.standard_normal((n, self.dim))
        comp = rng.integers(0, 8, size=n)
        angle = comp * (np.pi / 4)
        centres = self.radius * np.stack([np.cos(angle), np.sin(angle)], axis=1)
        return centres + self.std * rng.standard_normal((n, 2))

    def to_dict(self):
        return {"dim": self.dim, "kind": self.kind, "radius": self.radius, "std": self.std}


@dataclass
class PairedBatch:
    x0: np.ndarray
    x1: np.ndarray
    c_raw: np.ndarray
    c_disc: Optional[np.ndarray]
    strategy: str
    gamma: float = 0.0
    # cot only: noise row i carries the discretised condition of data row perm[i]
    cond_perm: Optional[np.ndarray] = field(default=None, repr=False)
    plan: Optional[ot.CouplingPlan] = field(default=None, repr=False)

    @property
    def noise_conditions(self):
        if self.cond_perm is None or self.c_disc is None:
            return None
        return self.c_disc[self.cond_perm]


def _check(x1, c):
    x1 = np.asarray(x1, dtype=np.float64)
    if x1.ndim == 1:
        x1 = x1[:, None]
    if len(x1) == 0:
        raise ValueError("batch must be non-empty")
    c = np.asarray(c, dtype=np.float64)
    c = c.reshape(len(x1), -1) if c.size else np.zeros((len(x1), 0))
    return x1, c


def _draw_noise(x1, noise, rng):
    if noise.dim != x1.shape[1]:
        raise ValueError(f"noise dim {noise.dim} != sample dim {x1.shape[1]}")
    return noise.sample(len(x1), rng)


def _reorder(x0, plan):
    # noise row i was assigned to data row plan.assignment[i]
    out = np.empty_like(x0)
    out[plan.assignment] = x0
    return out


def pair_independent(x1_batch, c_batch, noise: NoiseSpec, rng) -> PairedBatch:
    x1, c = _check(x1_batch, c_batch)
    x0 = _draw_noise(x1, noise, rng)
    return PairedBatch(x0, x1, c, None, "independent")


def pair_ot(x1_batch, c_batch, noise: NoiseSpec, rng) -> PairedBatch:
    x1, c = _check(x1_batch, c_batch)
    x0 = _draw_noise(x1, noise, rng)
    plan = ot.solve_assignment(ot.cost_matrix(x0, x1))
    return PairedBatch(_reorder(x0, plan), x1, c, None, "ot", plan=plan)


def pair_cot(x1_batch, c_raw_batch, c_disc_batch, noise: NoiseSpec,
             cost_spec: ot.CostSpec, rng) -> PairedBatch:
    """Conditional OT pairing.

    The noise side gets a uniformly random permutation of the batch's
    discretised conditions; the assignment minimises sample cost plus
    ``gamma^2`` times condition cost. Raw conditions stay attached to their
    data rows.
    """
    x1, c_raw = _check(x1_batch, c_raw_batch)
    c_disc = np.asarray(c_disc_batch, dtype=np.float64).reshape(len(x1), -1)
    x0 = _draw_noise(x1, noise, rng)
    perm = rng.permutation(len(x1))
    c0 = c_disc[perm]
    gamma = ot.resolve_gamma(cost_spec, x0, c0, x1, c_disc)
    cost = ot.conditional_cost_matrix(x0, c0, x1, c_disc, gamma)
    plan = ot.solve_assignment(cost)
    return PairedBatch(_reorder(x0, plan), x1, c_raw, c_disc, "cot",
                       gamma=gamma, cond_perm=perm[plan.inverse()], plan=plan)


def pair(strategy, x1_batch, c_raw_batch, c_disc_batch, noise, cost_spec, rng) -> PairedBatch:
    if strategy == "independent":
        return pair_independent(x1_batch, c_raw_batch, noise, rng)
    if strategy == "ot":
        return pair_ot(x1_batch, c_raw_batch, noise, rng)
    if strategy == "cot":
        if c_disc_batch is None:
            raise ValueError("cot pairing needs discretised conditions")
        return pair_cot(x1_batch, c_raw_batch, c_disc_batch, noise, cost_spec, rng)
    raise ValueError(f"unknown coupling strategy {strategy!r}")
