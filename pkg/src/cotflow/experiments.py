"""Train-once helpers for the reference comparisons (fork and moons tables).

Trained models are cached as checkpoints keyed by a hash of everything that
determines the run, so repeated evaluations never retrain.
"""
import hashlib
import json
import logging
import os
import time

from . import io, nn
from .flow import TrainConfig, init_state, train
from .tasks import make_task

log = logging.getLogger(__name__)

N_TRAIN = 20000
REFERENCE_STEPS = 50000
DEFAULT_CACHE = os.environ.get(
    "COTFLOW_ACCEPT_CACHE",
    os.path.join(os.path.dirname(__file__), os.pardir, os.pardir, ".acceptance_cache"),
)


def reference_config(coupling, seed, steps=REFERENCE_STEPS, **changes) -> TrainConfig:
    """Distribution-task hyperparameters: 4x64 SELU MLP, batch 256, lr 1e-3."""
    return TrainConfig(steps=steps, batch_size=256, coupling=coupling, seed=seed,
                       optimizer=nn.OptimizerConfig(learning_rate=1e-3), **changes)


def _key(task, n_train, cfg: TrainConfig):
    rc = io.RunConfig(task=io.TaskSpec(task, {}, n_train, cfg.seed), train=cfg)
    blob = json.dumps(io.config_to_dict(rc)["train"], sort_keys=True) + f"|{task}|{n_train}"
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def trained(task, coupling, seed, steps=REFERENCE_STEPS, n_train=N_TRAIN,
            cache_dir=None, **changes):
    """Return ``(model, info)`` for a reference run, training it if not cached.

    ``info`` holds the wall time of the original training run and the mean
    loss over its last 1000 steps.
    """
    cache_dir = os.path.abspath(cache_dir or DEFAULT_CACHE)
    cfg = reference_config(coupling, seed, steps, **changes)
    cfg.K = cfg.clusters_for(task)
    stem = os.path.join(cache_dir, f"{task}-{coupling}-s{seed}-{_key(task, n_train, cfg)}")
    if os.path.exists(stem + ".json") and os.path.exists(stem + ".info.json"):
        ckpt = io.load_checkpoint(stem + ".json")
        with open(stem + ".info.json") as fh:
            return ckpt.model, json.load(fh)

    ds = make_task(task, n_train, seed=seed)
    state = init_state(ds, cfg)
    t0 = time.perf_counter()
    model, rows = train(ds, cfg, state)
    wall = time.perf_counter() - t0
    tail = [r["loss"] for r in rows[-1000:]]
    info = {"task": task, "coupling": coupling, "seed": seed, "steps": steps,
            "seconds": wall, "final_loss": sum(tail) / max(len(tail), 1)}
    os.makedirs(cache_dir, exist_ok=True)
    io.save_checkpoint(model, state.cond, stem + ".json", step=state.step, rng=state.rng,
                       task=io.dataset_info(ds, n_train, seed), train=None)
    with open(stem + ".info.json", "w") as fh:
        json.dump(info, fh, indent=2)
    log.info("trained %s/%s seed %d in %.0fs", task, coupling, seed, wall)
    return model, info


REFERENCE_RUNS = [(task, coupling, seed)
                  for task in ("fork", "moons")
                  for seed in (0, 1, 2)
                  for coupling in ("independent", "ot", "cot")]


def main():
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for task, coupling, seed in REFERENCE_RUNS:
        _, info = trained(task, coupling, seed)
        print(json.dumps(info), flush=True)


if __name__ == "__main__":
    main()
