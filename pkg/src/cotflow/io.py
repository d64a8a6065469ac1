"""Run configuration, checkpoints and CSV outputs.

Every file written here carries a ``format_version`` ("major.minor").
Readers accept any minor revision of their own major version and reject the
rest. JSON files hold it as a top-level key; CSV files as their last column,
so the leading columns keep their documented order.
"""
import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

import numpy as np

from . import nn
from .condproc import ConditionProcessor, KMeansDiscretizer, PcaEncoder
from .flow import TrainConfig
from .metrics import MetricsRecord
from .ode import SolverConfig
from .ot import CostSpec
from .tasks import TASKS, ConditionedDataset, default_clusters

FORMAT_VERSION = "1.0"


class ConfigError(ValueError):
    pass


class FormatError(ValueError):
    """Unreadable, corrupt or wrong-version file."""


def _major(version):
    try:
        return int(str(version).split(".")[0])
    except ValueError:
        raise FormatError(f"malformed format_version {version!r}") from None


def check_version(version, what="file"):
    if version is None:
        raise FormatError(f"{what} has no format_version")
    if _major(version) != _major(FORMAT_VERSION):
        raise FormatError(
            f"{what} has format_version {version}; this reader handles {_major(FORMAT_VERSION)}.x"
        )


# ---------------------------------------------------------------- configs

@dataclass
class TaskSpec:
    name: str = "fork"
    params: dict = field(default_factory=dict)
    n_train: int = 20000
    seed: int = 0


@dataclass
class EvalConfig:
    n_eval: int = 2000
    seeds: tuple = (0,)
    metrics: tuple = ("w2",)


@dataclass
class RunConfig:
    task: TaskSpec = field(default_factory=TaskSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    solver: List[SolverConfig] = field(
        default_factory=lambda: [SolverConfig("euler", 1), SolverConfig("euler", 2)])
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: str = "runs"


_TRAIN_KEYS = {
    "steps", "batch_size", "coupling", "gamma", "gamma_multiplier", "K", "seed",
    "eval_every", "hidden_dims", "learning_rate", "beta1", "beta2", "eps",
    "use_pca", "pca_dim", "checkpoint_every",
}
_METRICS = ("w2", "w2_marginal", "w2_conditional", "tv", "straightness")


def _strict(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a JSON object")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key {where + '.' if where else ''}{extra[0]!r}"
                          f" (allowed: {', '.join(sorted(allowed))})")


def _task_from(raw):
    if isinstance(raw, str):
        raw = {"name": raw}
    _strict(raw, {"name", "params", "n_train", "seed"}, "task")
    if "name" not in raw:
        raise ConfigError("task.name is required")
    spec = TaskSpec(raw["name"], dict(raw.get("params", {})),
                    int(raw.get("n_train", 20000)), int(raw.get("seed", 0)))
    if spec.name not in TASKS:
        raise ConfigError(f"unknown task {spec.name!r}; choose from {sorted(TASKS)}")
    return spec


def _train_from(raw, task_name):
    _strict(raw, _TRAIN_KEYS, "train")
    gamma = raw.get("gamma", "auto")
    mult = float(raw.get("gamma_multiplier", 10.0))
    if gamma == "auto":
        cost = CostSpec.auto(mult)
    elif isinstance(gamma, (int, float)) and not isinstance(gamma, bool):
        cost = CostSpec.fixed(float(gamma))
    else:
        raise ConfigError(f"train.gamma must be 'auto' or a number, got {gamma!r}")
    opt = nn.OptimizerConfig(
        learning_rate=float(raw.get("learning_rate", 1e-3)),
        beta1=float(raw.get("beta1", 0.9)),
        beta2=float(raw.get("beta2", 0.999)),
        eps=float(raw.get("eps", 1e-8)),
    )
    K = raw.get("K")
    return TrainConfig(
        steps=int(raw.get("steps", 50000)),
        batch_size=int(raw.get("batch_size", 256)),
        coupling=raw.get("coupling", "cot"),
        cost_spec=cost,
        # the task default is written out so the record shows what was used
        K=int(K) if K is not None else default_clusters(task_name),
        seed=int(raw.get("seed", 0)),
        eval_every=int(raw.get("eval_every", 1000)),
        hidden_dims=tuple(int(h) for h in raw.get("hidden_dims", (64, 64, 64, 64))),
        optimizer=opt,
        use_pca=bool(raw.get("use_pca", False)),
        pca_dim=int(raw.get("pca_dim", 100)),
        checkpoint_every=int(raw.get("checkpoint_every", 0)),
    )


def _solver_from(raw):
    items = raw if isinstance(raw, list) else [raw]
    out = []
    for i, item in enumerate(items):
        _strict(item, {"kind", "steps", "rtol", "atol", "max_nfe"}, f"solver[{i}]")
        out.append(SolverConfig(**item))
    return out


def _eval_from(raw):
    _strict(raw, {"n_eval", "seeds", "metrics"}, "eval")
    metrics = tuple(raw.get("metrics", ("w2",)))
    for m in metrics:
        if m not in _METRICS:
            raise ConfigError(f"unknown metric {m!r}; choose from {_METRICS}")
    return EvalConfig(int(raw.get("n_eval", 2000)), tuple(int(s) for s in raw.get("seeds", (0,))),
                      metrics)


def _writable(path):
    probe = os.path.abspath(path)
    while not os.path.exists(probe):
        parent = os.path.dirname(probe)
        if parent == probe:
            break
        probe = parent
    return os.path.isdir(probe) and os.access(probe, os.W_OK)


def config_from_dict(raw) -> RunConfig:
    _strict(raw, {"format_version", "task", "train", "solver", "eval", "output_dir"}, "")
    if "format_version" in raw:
        check_version(raw["format_version"], "config")
    if "task" not in raw:
        raise ConfigError("config needs a 'task'")
    try:
        task = _task_from(raw["task"])
        cfg = RunConfig(
            task=task,
            train=_train_from(raw.get("train", {}), task.name),
            solver=_solver_from(raw["solver"]) if "solver" in raw else RunConfig().solver,
            eval=_eval_from(raw.get("eval", {})),
            output_dir=str(raw.get("output_dir", "runs")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    if not _writable(cfg.output_dir):
        raise ConfigError(f"output_dir {cfg.output_dir!r} is not writable")
    return cfg


def load_json(path):
    """Parse a JSON file, reporting syntax errors with line and column."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def load_config(path) -> RunConfig:
    return config_from_dict(load_json(path))


def config_to_dict(cfg: RunConfig) -> dict:
    t = cfg.train
    cs = t.cost_spec
    return {
        "format_version": FORMAT_VERSION,
        "task": asdict(cfg.task),
        "train": {
            "steps": t.steps, "batch_size": t.batch_size, "coupling": t.coupling,
            "gamma": "auto" if cs.mode == "auto" else cs.gamma,
            "gamma_multiplier": cs.multiplier, "K": t.K, "seed": t.seed,
            "eval_every": t.eval_every, "hidden_dims": list(t.hidden_dims),
            "learning_rate": t.optimizer.learning_rate, "beta1": t.optimizer.beta1,
            "beta2": t.optimizer.beta2, "eps": t.optimizer.eps,
            "use_pca": t.use_pca, "pca_dim": t.pca_dim, "checkpoint_every": t.checkpoint_every,
        },
        "solver": [asdict(s) for s in cfg.solver],
        "eval": {"n_eval": cfg.eval.n_eval, "seeds": list(cfg.eval.seeds),
                 "metrics": list(cfg.eval.metrics)},
        "output_dir": cfg.output_dir,
    }


def save_config(cfg: RunConfig, path):
    _atomic_write(path, json.dumps(config_to_dict(cfg), indent=2) + "\n")


# ------------------------------------------------------------ checkpoints

@dataclass
class Checkpoint:
    model: nn.FlowModel
    cond: Optional[ConditionProcessor] = None
    step: int = 0
    rng_state: Optional[dict] = None
    task: Optional[dict] = None        # {"name", "params", "n_train", "seed", "prior"}
    train: Optional[dict] = None       # config_to_dict(...)["train"]

    def rng(self):
        g = np.random.default_rng()
        if self.rng_state is None:
            raise FormatError("checkpoint has no rng state")
        g.bit_generator.state = self.rng_state
        return g


def _floats(a):
    return [float(x) for x in np.asarray(a, dtype=np.float64).ravel()]


def _array(vals, shape):
    return np.asarray(vals, dtype=np.float64).reshape(shape)


def _cond_to_dict(cond: Optional[ConditionProcessor]):
    if cond is None:
        return None
    d = cond.discretizer
    out = {
        "centroids": _floats(d.centroids), "centroid_shape": list(d.centroids.shape),
        "inertia": float(d.inertia), "seed": int(d.seed), "n_iter": int(d.n_iter),
        "passthrough_dims": int(cond.passthrough_dims), "encoder": None,
    }
    if cond.encoder is not None:
        e = cond.encoder
        out["encoder"] = {
            "mean": _floats(e.mean), "components": _floats(e.components),
            "component_shape": list(e.components.shape),
            "singular_values": _floats(e.singular_values), "n_fit": int(e.n_fit),
        }
    return out


def _cond_from_dict(d):
    if d is None:
        return None
    disc = KMeansDiscretizer(_array(d["centroids"], d["centroid_shape"]), d["inertia"],
                             d["seed"], d["n_iter"])
    enc = None
    if d["encoder"] is not None:
        e = d["encoder"]
        enc = PcaEncoder(np.asarray(e["mean"], dtype=np.float64),
                         _array(e["components"], e["component_shape"]),
                         np.asarray(e["singular_values"], dtype=np.float64), e["n_fit"])
    return ConditionProcessor(disc, enc, d["passthrough_dims"])


def _digest(payload):
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def dataset_info(ds: ConditionedDataset, n_train, seed, params=None):
    return {"name": ds.name, "params": dict(params or {}), "n_train": int(n_train),
            "seed": int(seed), "prior": ds.prior.to_dict()}


def save_checkpoint(model: nn.FlowModel, cond: Optional[ConditionProcessor], path,
                    step=0, rng=None, task=None, train=None):
    """Write a versioned, checksummed JSON checkpoint.

    Python's float repr is the shortest string that parses back to the same
    double, so parameters and optimizer moments round-trip bitwise.
    """
    payload = {
        "spec": {**asdict(model.spec), "hidden_dims": list(model.spec.hidden_dims)},
        "parameters": _floats(model.parameters),
        "adam": {"m": _floats(model.adam_state.m), "v": _floats(model.adam_state.v),
                 "step": int(model.adam_state.step)},
        "condproc": _cond_to_dict(cond),
        "step": int(step),
        "rng_state": rng.bit_generator.state if rng is not None else None,
        "task": task,
        "train": train,
    }
    doc = {"format_version": FORMAT_VERSION, "kind": "cotflow-checkpoint",
           "sha256": _digest(payload), "payload": payload}
    _atomic_write(path, json.dumps(doc, allow_nan=False))


def load_checkpoint(path) -> Checkpoint:
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: truncated or corrupt checkpoint "
                          f"(line {exc.lineno}, column {exc.colno}: {exc.msg})") from None
    if not isinstance(doc, dict) or doc.get("kind") != "cotflow-checkpoint":
        raise FormatError(f"{path}: not a checkpoint file")
    check_version(doc.get("format_version"), f"checkpoint {path}")
    payload = doc.get("payload")
    if payload is None or _digest(payload) != doc.get("sha256"):
        raise FormatError(f"{path}: checksum mismatch, file is corrupt")

    s = payload["spec"]
    spec = nn.MlpSpec(s["input_dim"], s["output_dim"], tuple(s["hidden_dims"]),
                      s["activation"], s["seed"])
    model = nn.from_parameters(spec, np.asarray(payload["parameters"], dtype=np.float64))
    a = payload["adam"]
    model.adam_state = nn.AdamState(np.asarray(a["m"], dtype=np.float64),
                                    np.asarray(a["v"], dtype=np.float64), int(a["step"]))
    return Checkpoint(model, _cond_from_dict(payload["condproc"]), int(payload["step"]),
                      payload["rng_state"], payload["task"], payload["train"])


def _atomic_write(path, text):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


# -------------------------------------------------------------------- CSV

METRIC_COLUMNS = ["task", "coupling", "solver", "nfe", "seed", "w2_squared", "tv",
                  "straightness", "n_samples"]


def _fmt(val):
    if val is None:
        return ""
    if isinstance(val, (float, np.floating)):
        return repr(float(val))
    return str(val)


def _append_rows(path, header, rows):
    """Append rows, writing the header first if the file is new or empty."""
    header = list(header) + ["format_version"]
    fresh = not os.path.exists(path) or os.path.getsize(path) == 0
    if not fresh:
        with open(path, newline="", encoding="utf-8") as fh:
            existing = next(csv.reader(fh), None)
        if existing != header:
            raise FormatError(f"{path}: existing header {existing} does not match {header}")
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if fresh:
            w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row] + [FORMAT_VERSION])


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError(f"{path}: empty file")
        if not header or header[-1] != "format_version":
            raise FormatError(f"{path}: no format_version column")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            check_version(row[-1], f"{path}:{lineno}")
            rows.append(row[:-1])
    return header[:-1], rows


def emit_metrics(records, path):
    _append_rows(path, METRIC_COLUMNS,
                 ([getattr(r, c) for c in METRIC_COLUMNS] for r in records))


def read_metrics(path) -> List[MetricsRecord]:
    header, rows = _read_rows(path)
    if header != METRIC_COLUMNS:
        raise FormatError(f"{path}: unexpected metrics header {header}")
    types = {f.name: f.type for f in fields(MetricsRecord)}
    out = []
    for row in rows:
        kw = {}
        for name, cell in zip(header, row):
            if name in ("nfe", "seed", "n_samples"):
                kw[name] = int(cell)
            elif types[name] == str:
                kw[name] = cell
            else:
                kw[name] = float(cell) if cell != "" else None
        out.append(MetricsRecord(**kw))
    return out


def dataset_columns(dim, cond_dim):
    return [f"x_{i}" for i in range(dim)] + [f"c_{i}" for i in range(cond_dim)]


def write_dataset(ds: ConditionedDataset, path):
    if os.path.exists(path):
        os.remove(path)
    _append_rows(path, dataset_columns(ds.dim, ds.cond_dim),
                 np.hstack([ds.samples, ds.conditions_raw]).tolist())


def read_dataset(path):
    """``(samples, conditions)`` arrays from a dataset CSV."""
    header, rows = _read_rows(path)
    dim = sum(h.startswith("x_") for h in header)
    data = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header))
    return data[:, :dim], data[:, dim:]


LOG_COLUMNS = ["step", "loss", "w2_nfe1", "w2_nfe2"]


def append_log(rows, path):
    _append_rows(path, LOG_COLUMNS, ([r.get(c) for c in LOG_COLUMNS] for r in rows))


def read_log(path):
    header, rows = _read_rows(path)
    out = []
    for row in rows:
        d = {"step": int(row[0])}
        for name, cell in zip(header[1:], row[1:]):
            if cell != "":
                d[name] = float(cell)
        out.append(d)
    return out


def write_samples(samples, path, paths=None):
    """Samples CSV ``sample_id,t,x_0..``: final states at t=1, or every
    recorded state when ``paths`` (a list of ``(t, x)``) is given."""
    samples = np.asarray(samples, dtype=np.float64)
    dim = samples.shape[1]
    if os.path.exists(path):
        os.remove(path)
    stages = paths if paths is not None else [(1.0, samples)]
    rows = ([i, t] + x[i].tolist() for t, x in stages for i in range(len(x)))
    _append_rows(path, ["sample_id", "t"] + [f"x_{k}" for k in range(dim)], rows)
