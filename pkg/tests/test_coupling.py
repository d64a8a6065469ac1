import itertools

import numpy as np
import pytest

from cotflow import coupling, oracles, ot
from cotflow.condproc import fit_condition_processor
from cotflow.coupling import NoiseSpec
from cotflow.tasks import make_task


class FixedNoise:
    """Noise source that returns a preset batch, for hand-built examples."""

    def __init__(self, x0):
        self.x0 = np.asarray(x0, dtype=float)
        self.dim = self.x0.shape[1]

    def sample(self, n, rng):
        return self.x0[:n].copy()


def _rows(a):
    return sorted(map(tuple, np.asarray(a).tolist()))


def test_independent_single_and_deterministic():
    x1 = np.array([[1.0, 2.0]])
    b = coupling.pair_independent(x1, np.zeros((1, 1)), NoiseSpec(2), np.random.default_rng(0))
    assert b.x0.shape == (1, 2)
    assert np.array_equal(b.x0, np.random.default_rng(0).standard_normal((1, 2)))
    again = coupling.pair_independent(x1, np.zeros((1, 1)), NoiseSpec(2), np.random.default_rng(0))
    assert np.array_equal(b.x0, again.x0)


def test_noise_moments():
    x0 = NoiseSpec(3).sample(100_000, np.random.default_rng(1))
    assert np.all(np.abs(x0.mean(0)) < 0.02)
    assert np.all(np.abs(x0.var(0) - 1) < 0.02)


def test_eight_gaussians_prior():
    x0 = NoiseSpec(2, "eight_gaussians").sample(20_000, np.random.default_rng(2))
    r = np.linalg.norm(x0, axis=1)
    assert abs(r.mean() - 8.0) < 0.1
    with pytest.raises(ValueError):
        NoiseSpec(3, "eight_gaussians")
    with pytest.raises(ValueError):
        NoiseSpec(0)


def test_ot_single_row_matches_independent(backend):
    x1, c = np.array([[0.3, -1.0]]), np.array([[1.0]])
    a = coupling.pair_ot(x1, c, NoiseSpec(2), np.random.default_rng(5))
    b = coupling.pair_independent(x1, c, NoiseSpec(2), np.random.default_rng(5))
    assert np.array_equal(a.x0, b.x0)


def test_ot_crossing_example(backend):
    x1 = np.array([[-10.0, 0.0], [10.0, 0.0]])
    b = coupling.pair_ot(x1, np.zeros((2, 1)), FixedNoise([[9.0, 0.0], [-9.0, 0.0]]), None)
    assert b.x0.tolist() == [[-9.0, 0.0], [9.0, 0.0]]
    # brute force over both permutations agrees
    perm, _ = oracles.brute_assignment(ot.cost_matrix([[9.0, 0.0], [-9.0, 0.0]], x1))
    assert perm == (1, 0)


def test_ot_never_worse_than_independent(backend):
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x1 = rng.normal(size=(32, 2)) * 3
        a = coupling.pair_ot(x1, np.zeros((32, 1)), NoiseSpec(2), np.random.default_rng(seed))
        b = coupling.pair_independent(x1, np.zeros((32, 1)), NoiseSpec(2), np.random.default_rng(seed))
        assert ((a.x0 - x1) ** 2).sum() <= ((b.x0 - x1) ** 2).sum() + 1e-12


@pytest.mark.parametrize("strategy", coupling.STRATEGIES)
def test_data_side_untouched(strategy, backend):
    rng = np.random.default_rng(7)
    x1 = rng.normal(size=(20, 2))
    c = rng.integers(0, 3, (20, 1)).astype(float)
    b = coupling.pair(strategy, x1, c, c, NoiseSpec(2), ot.CostSpec.auto(), np.random.default_rng(1))
    assert np.array_equal(b.x1, x1) and np.array_equal(b.c_raw, c)
    # x0 is a reordering of the drawn noise
    drawn = NoiseSpec(2).sample(20, np.random.default_rng(1))
    assert _rows(b.x0) == _rows(drawn)


def test_cot_single_cluster_equals_ot(backend):
    rng = np.random.default_rng(8)
    for seed in range(30):
        x1 = rng.normal(size=(24, 2))
        same = np.zeros((24, 1))
        a = coupling.pair_cot(x1, same, same, NoiseSpec(2), ot.CostSpec.auto(),
                              np.random.default_rng(seed))
        b = coupling.pair_ot(x1, same, NoiseSpec(2), np.random.default_rng(seed))
        assert np.array_equal(a.x0, b.x0)


def test_cot_gamma_zero_equals_ot(backend):
    rng = np.random.default_rng(9)
    for seed in range(20):
        x1 = rng.normal(size=(16, 2))
        c = rng.integers(0, 4, (16, 1)).astype(float)
        a = coupling.pair_cot(x1, c, c, NoiseSpec(2), ot.CostSpec.fixed(0.0),
                              np.random.default_rng(seed))
        b = coupling.pair_ot(x1, c, NoiseSpec(2), np.random.default_rng(seed))
        assert np.array_equal(a.x0, b.x0)


def test_cot_noise_conditions_are_a_permutation(backend):
    rng = np.random.default_rng(10)
    x1 = rng.normal(size=(30, 2))
    c = rng.integers(0, 5, (30, 1)).astype(float)
    b = coupling.pair_cot(x1, c, c, NoiseSpec(2), ot.CostSpec.auto(), np.random.default_rng(3))
    assert _rows(b.noise_conditions) == _rows(c)


def test_cot_large_gamma_distinct_conditions_follow_inverse_permutation(backend):
    for seed in range(30):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        x1 = rng.normal(size=(n, 2))
        c = np.arange(n, dtype=float)[:, None]
        stream = np.random.default_rng(seed + 100)
        b = coupling.pair_cot(x1, c, c, NoiseSpec(2), ot.CostSpec.fixed(1e6), stream)
        # replay the stream: noise, then the condition permutation
        replay = np.random.default_rng(seed + 100)
        x0 = NoiseSpec(2).sample(n, replay)
        perm = replay.permutation(n)
        # noise row i carries condition c[perm[i]], so it must meet data row perm[i]
        assert np.array_equal(b.plan.assignment, perm)
        assert np.array_equal(b.x0[perm], x0)
        cost = ot.conditional_cost_matrix(x0, c[perm], x1, c, 1e6)
        assert oracles.brute_assignment(cost)[0] == tuple(perm.tolist())


def _zero_condition_matching_exists(c0, c1):
    n = len(c0)
    return any(all(c0[i] == c1[p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


def test_cot_moons_pairs_respect_clusters(backend):
    ds = make_task("moons", 400, seed=0)
    proc = fit_condition_processor(ds.conditions_raw, 2, seed=0)
    rng = np.random.default_rng(0)
    for trial in range(30):
        n = int(rng.integers(2, 9))
        idx = rng.integers(0, len(ds), n)
        x1, c_raw = ds.samples[idx], ds.conditions_raw[idx]
        c_disc = proc(c_raw)
        b = coupling.pair_cot(x1, c_raw, c_disc, ds.prior, ot.CostSpec.fixed(1e3),
                              np.random.default_rng(trial))
        assert _zero_condition_matching_exists(b.noise_conditions[:, 0], c_disc[:, 0])
        assert np.array_equal(b.noise_conditions, c_disc)


def test_cot_cost_not_worse_than_random_pairing(backend):
    rng = np.random.default_rng(12)
    for seed in range(20):
        x1 = rng.normal(size=(20, 2))
        c = rng.integers(0, 3, (20, 1)).astype(float)
        b = coupling.pair_cot(x1, c, c, NoiseSpec(2), ot.CostSpec.fixed(2.0), np.random.default_rng(seed))
        cost = ot.sq_dist_matrix(b.x0, x1).diagonal().sum() + 4.0 * ((b.noise_conditions - c) ** 2).sum()
        perm = rng.permutation(20)
        rand = ((b.x0[perm] - x1) ** 2).sum() + 4.0 * ((b.noise_conditions[perm] - c) ** 2).sum()
        assert cost <= rand + 1e-9


def test_pair_validation():
    with pytest.raises(ValueError):
        coupling.pair("sinkhorn", np.zeros((2, 1)), np.zeros((2, 1)), None, NoiseSpec(1), ot.CostSpec.auto(), None)
    with pytest.raises(ValueError):
        coupling.pair("cot", np.zeros((2, 1)), np.zeros((2, 1)), None, NoiseSpec(1), ot.CostSpec.auto(), None)
    with pytest.raises(ValueError):
        coupling.pair_independent(np.zeros((2, 2)), np.zeros((2, 1)), NoiseSpec(3), np.random.default_rng(0))
