"""Conditional flow-matching training with pluggable noise/data couplings."""
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from . import coupling, nn
from .condproc import ConditionProcessor, fit_condition_processor
from .ot import CostSpec
from .tasks import ConditionedDataset, default_clusters

log = logging.getLogger(__name__)


class NonFiniteLoss(RuntimeError):
    pass


@dataclass
class TrainConfig:
    steps: int = 50000
    batch_size: int = 256
    coupling: str = "cot"
    cost_spec: CostSpec = field(default_factory=CostSpec.auto)
    K: Optional[int] = None
    seed: int = 0
    eval_every: int = 1000
    hidden_dims: tuple = (64, 64, 64, 64)
    optimizer: nn.OptimizerConfig = field(default_factory=nn.OptimizerConfig)
    use_pca: bool = False
    pca_dim: int = 100
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.coupling not in coupling.STRATEGIES:
            raise ValueError(f"unknown coupling {self.coupling!r}; choose from {coupling.STRATEGIES}")
        if self.K is not None and self.K < 1:
            raise ValueError("K must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")

    def clusters_for(self, task_name):
        return self.K if self.K is not None else default_clusters(task_name)


@dataclass
class Interpolant:
    t: float
    x_t: np.ndarray
    target: np.ndarray


def make_interpolant(x0, x1, t) -> Interpolant:
    """Straight-line bridge ``x_t = t*x1 + (1-t)*x0`` with velocity ``x1 - x0``."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ValueError(f"shape mismatch: {x0.shape} vs {x1.shape}")
    return Interpolant(t, t * x1 + (1.0 - t) * x0, x1 - x0)


def interpolate_batch(x0, x1, t):
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    return t * x1 + (1.0 - t) * x0, x1 - x0


@dataclass
class TrainState:
    model: nn.FlowModel
    rng: np.random.Generator
    cond: Optional[ConditionProcessor] = None
    step: int = 0
    log: List[dict] = field(default_factory=list)


def build_model_spec(dataset: ConditionedDataset, cfg: TrainConfig) -> nn.MlpSpec:
    return nn.MlpSpec(
        input_dim=1 + dataset.dim + dataset.cond_dim,
        output_dim=dataset.dim,
        hidden_dims=tuple(cfg.hidden_dims),
        seed=cfg.seed,
    )


def init_state(dataset: ConditionedDataset, cfg: TrainConfig) -> TrainState:
    model = nn.init_model(build_model_spec(dataset, cfg))
    # batch/noise/time stream is independent of the parameter-init stream
    rng = np.random.default_rng([cfg.seed, 1])
    cond = None
    if cfg.coupling == "cot":
        cond = fit_condition_processor(dataset.conditions_raw, cfg.clusters_for(dataset.name),
                                       seed=cfg.seed, use_pca=cfg.use_pca, pca_dim=cfg.pca_dim)
    return TrainState(model, rng, cond)


def train_step(model, dataset: ConditionedDataset, cfg: TrainConfig,
               cond: Optional[ConditionProcessor], rng, t_fixed=None):
    """One minibatch update; returns ``(model, loss)``.

    Draw order: batch indices, pairing (noise, then the condition
    permutation for cot), then times.
    """
    n = len(dataset)
    idx = rng.integers(0, n, size=cfg.batch_size)
    x1 = dataset.samples[idx]
    c_raw = dataset.conditions_raw[idx]
    if cfg.coupling == "cot":
        if cond is None:
            raise ValueError("cot coupling needs a fitted condition processor")
        c_disc = cond(c_raw)
    else:
        c_disc = None
    batch = coupling.pair(cfg.coupling, x1, c_raw, c_disc, dataset.prior, cfg.cost_spec, rng)
    t = rng.random(cfg.batch_size) if t_fixed is None else np.full(cfg.batch_size, float(t_fixed))
    x_t, target = interpolate_batch(batch.x0, batch.x1, t)
    inputs = nn.stack_inputs(t, x_t, batch.c_raw)
    loss, grad = nn.loss_and_grad(model, inputs, target)
    if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
        raise NonFiniteLoss(
            f"non-finite loss {loss!r} (grad finite: {bool(np.all(np.isfinite(grad)))}, "
            f"gamma={batch.gamma:.4g}, coupling={cfg.coupling}, adam step={model.adam_state.step})"
        )
    nn.adam_step(model, grad, cfg.optimizer)
    return model, loss


def train(dataset: ConditionedDataset, cfg: TrainConfig, state: Optional[TrainState] = None,
          eval_fn: Optional[Callable] = None, checkpoint_fn: Optional[Callable] = None,
          t_fixed=None):
    """Run (or resume) training up to ``cfg.steps``; returns ``(model, log)``.

    ``log`` holds one row per step: ``{"step", "loss"}`` plus whatever
    ``eval_fn(model)`` returns on every ``eval_every``-th step.
    ``checkpoint_fn(state)`` fires every ``checkpoint_every`` steps.
    """
    if state is None:
        state = init_state(dataset, cfg)
    while state.step < cfg.steps:
        state.model, loss = train_step(state.model, dataset, cfg, state.cond, state.rng, t_fixed)
        state.step += 1
        row = {"step": state.step, "loss": loss}
        if eval_fn is not None and state.step % cfg.eval_every == 0:
            row.update(eval_fn(state.model))
        state.log.append(row)
        if state.step % 5000 == 0:
            log.info("step %d loss %.5f", state.step, loss)
        if checkpoint_fn is not None and cfg.checkpoint_every and state.step % cfg.checkpoint_every == 0:
            checkpoint_fn(state)
    return state.model, state.log


def with_coupling(cfg: TrainConfig, name, **changes) -> TrainConfig:
    return replace(cfg, coupling=name, **changes)
