"""Time the hot kernels under both backends (numba and pure numpy).

    python benchmarks/bench_kernels.py [--repeat 5]

The first call of each numba kernel is a warm-up (JIT compile or cache
load) and is excluded. Reports the best of ``--repeat`` runs.
"""
import argparse
import time

import numpy as np

from cotflow import _accel, coupling, metrics, ot
from cotflow.kernels import selu as selu_kernel
from cotflow.tasks import make_task


def _best(fn, repeat):
    fn()  # warm-up
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    moons = make_task("moons", 256, seed=0)
    x0 = moons.prior.sample(256, rng)
    moons_cost = ot.sq_dist_matrix(x0, moons.samples)
    uniform = rng.random((256, 256))
    a = np.cumsum(rng.normal(size=(64, 2)), axis=0)
    b = np.cumsum(rng.normal(size=(80, 2)), axis=0)
    z = rng.normal(size=(256, 64))
    trajs = [np.cumsum(rng.normal(size=(16, 2)), axis=0) for _ in range(20)]
    c = moons.conditions_raw
    return [
        ("assignment 256x256 uniform", lambda: ot.solve_assignment(uniform)),
        ("assignment 256x256 8gauss->moons", lambda: ot.solve_assignment(moons_cost)),
        ("dtw 64x80", lambda: metrics.dtw(a, b)),
        ("trajectory variance 20x16", lambda: metrics.trajectory_variance(trajs)),
        ("selu+derivative 256x64", lambda: selu_kernel.selu_pair(z)),
        ("cot pairing batch 256", lambda: coupling.pair_cot(
            moons.samples, c, c, moons.prior, ot.CostSpec.auto(), np.random.default_rng(1))),
    ]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    backends = ["numba", "numpy"] if _accel.HAS_NUMBA else ["numpy"]
    before = _accel.backend()
    rows = []
    try:
        for name, fn in cases():
            timing = {}
            for be in backends:
                _accel.set_backend(be)
                timing[be] = _best(fn, args.repeat)
            rows.append((name, timing))
    finally:
        _accel.set_backend(before)

    print(f"{'kernel':36s} " + " ".join(f"{b:>12s}" for b in backends) + "   speedup")
    for name, timing in rows:
        cells = " ".join(f"{1e3 * timing[b]:10.3f}ms" for b in backends)
        speed = timing["numpy"] / timing["numba"] if "numba" in timing else 1.0
        print(f"{name:36s} {cells}   {speed:6.1f}x")


if __name__ == "__main__":
    main()
