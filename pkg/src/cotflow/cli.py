"""``cotflow`` command line: gen, train, sample, eval, sweep, ot-matrix.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure
(non-finite loss, solver blow-up).
"""
import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import evaluate, io, ode, ot
from .condproc import fit_condition_processor
from .flow import NonFiniteLoss, TrainState, init_state, train
from .metrics import MetricsRecord
from .tasks import TASKS, default_clusters, make_task

log = logging.getLogger("cotflow")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


def _parse_params(items):
    """``key=value`` pairs; values are read as JSON when possible."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--param expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def _check_task(name):
    if name not in TASKS:
        raise UsageError(f"unknown task {name!r}; choose from {', '.join(sorted(TASKS))}")


def _seeds(text):
    try:
        return [int(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--seeds expects comma-separated integers, got {text!r}") from None


# -------------------------------------------------------------------- gen

def cmd_gen(args):
    _check_task(args.task)
    try:
        ds = make_task(args.task, args.n, seed=args.seed, **_parse_params(args.param))
    except TypeError as exc:
        raise UsageError(f"bad task parameter: {exc}") from None
    io.write_dataset(ds, args.out)
    print(json.dumps({"task": ds.name, "n": len(ds), "dim": ds.dim,
                      "cond_dim": ds.cond_dim, "out": args.out}))
    return EXIT_OK


# ------------------------------------------------------------------ train

def _eval_hook(task, params):
    def hook(model):
        row = {}
        for steps in (1, 2):
            res = evaluate.evaluate(model, task, ode.SolverConfig("euler", steps), n=2000,
                                    seed=0, task_params=params)
            row[f"w2_nfe{steps}"] = res["w2_squared"]
        return row
    return hook


def run_training(cfg: io.RunConfig, resume=False):
    """Train per ``cfg``, writing config, checkpoint and log into output_dir."""
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    ckpt_path = os.path.join(out, "checkpoint.json")
    log_path = os.path.join(out, "train_log.csv")
    task = cfg.task
    ds = make_task(task.name, task.n_train, seed=task.seed, **task.params)
    info = io.dataset_info(ds, task.n_train, task.seed, task.params)
    train_dict = io.config_to_dict(cfg)["train"]

    if resume:
        if not os.path.exists(ckpt_path):
            raise UsageError(f"--resume: no checkpoint at {ckpt_path}")
        ck = io.load_checkpoint(ckpt_path)
        state = TrainState(ck.model, ck.rng(), ck.cond, ck.step)
        # drop log rows written after the checkpoint
        kept = []
        if os.path.exists(log_path):
            kept = [r for r in io.read_log(log_path) if r["step"] <= ck.step]
            os.remove(log_path)
        io.append_log(kept, log_path)
    else:
        state = init_state(ds, cfg.train)
        if os.path.exists(log_path):
            os.remove(log_path)
        io.append_log([], log_path)
    io.save_config(cfg, os.path.join(out, "config.json"))

    written = [len(state.log)]

    def flush_log():
        io.append_log(state.log[written[0]:], log_path)
        written[0] = len(state.log)

    def checkpoint(st):
        flush_log()
        io.save_checkpoint(st.model, st.cond, ckpt_path, step=st.step, rng=st.rng,
                           task=info, train=train_dict)

    eval_fn = _eval_hook(task.name, task.params) if cfg.train.eval_every <= cfg.train.steps else None
    try:
        train(ds, cfg.train, state, eval_fn=eval_fn, checkpoint_fn=checkpoint)
    finally:
        flush_log()
    checkpoint(state)
    return state


def cmd_train(args):
    cfg = io.load_config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    state = run_training(cfg, resume=args.resume)
    print(json.dumps({"steps": state.step, "output_dir": cfg.output_dir,
                      "final_loss": state.log[-1]["loss"] if state.log else None,
                      "K": cfg.train.K}))
    return EXIT_OK


# ----------------------------------------------------------------- sample

def _load_ckpt(path):
    if not os.path.exists(path):
        raise UsageError(f"checkpoint not found: {path}")
    return io.load_checkpoint(path)


def _solver(args):
    return ode.SolverConfig(args.solver, args.steps)


def cmd_sample(args):
    ck = _load_ckpt(args.ckpt)
    if not ck.task:
        raise UsageError("checkpoint carries no task description")
    target = evaluate.eval_draw(ck.task["name"], args.n, args.seed, **ck.task.get("params", {}))
    rng = np.random.default_rng([evaluate.EVAL_SEED_OFFSET, args.seed])
    report = evaluate.generate(ck.model, target.conditions_raw, target.prior, _solver(args),
                               rng, record_path=args.paths)
    io.write_samples(report.samples, args.out, report.path if args.paths else None)
    summary = {"solver": args.solver, "steps": args.steps, "nfe": report.nfe, "n": args.n,
               "accepted": report.accepted, "rejected": report.rejected, "out": args.out}
    print(json.dumps(summary))
    return EXIT_OK


# ------------------------------------------------------------------- eval

def _injected(path):
    """Samples from a dataset CSV (``x_*`` columns) or a samples CSV (rows at
    the last recorded time)."""
    header, rows = io._read_rows(path)
    data = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header))
    xs = [i for i, h in enumerate(header) if h.startswith("x_")]
    if "t" in header:
        t = data[:, header.index("t")]
        data = data[t == t.max()]
    return data[:, xs]


def evaluate_record(model, task, metric, solver, seed, n, params=None, generated=None):
    names = {"w2": ("w2",), "tv": ("tv",), "straightness": ("straightness",)}[metric]
    res = evaluate.evaluate(model, task, solver, n=n, seed=seed, metric_names=names,
                            task_params=params, generated=generated)
    return MetricsRecord(task=task, coupling="", solver=solver.label(), nfe=res["nfe"], seed=seed,
                         w2_squared=res.get("w2_squared"), tv=res.get("tv"),
                         straightness=res.get("straightness"), n_samples=n)


def cmd_eval(args):
    _check_task(args.task)
    params = _parse_params(args.param)
    generated = _injected(args.inject_samples) if args.inject_samples else None
    model, coupling = None, ""
    if generated is None:
        if not args.ckpt:
            raise UsageError("--ckpt is required unless --inject-samples is given")
        ck = _load_ckpt(args.ckpt)
        model = ck.model
        coupling = (ck.train or {}).get("coupling", "")
    if args.metric == "straightness" and generated is not None:
        raise UsageError("straightness needs generated paths; drop --inject-samples")
    records = []
    for seed in _seeds(args.seeds):
        rec = evaluate_record(model, args.task, args.metric, _solver(args), seed, args.n,
                              params, generated)
        rec.coupling = coupling
        records.append(rec)
    io.emit_metrics(records, args.out)
    for rec in records:
        print(json.dumps({k: v for k, v in rec.as_dict().items() if v is not None}))
    return EXIT_OK


# ------------------------------------------------------------------ sweep

SWEEP_COLUMNS = io.METRIC_COLUMNS + ["status"]


def _sweep_cell(cfg: io.RunConfig, coupling, train_seed):
    """Train one (coupling, seed) model and score it under every solver and
    eval seed. Returns rows for the tidy CSV; failures become status rows."""
    tcfg = replace(cfg.train, coupling=coupling, seed=train_seed)
    task = cfg.task
    rows = []
    metric_names = tuple(m for m in cfg.eval.metrics if m in ("w2", "tv", "straightness"))
    try:
        ds = make_task(task.name, task.n_train, seed=task.seed, **task.params)
        model, _ = train(ds, tcfg)
    except NonFiniteLoss as exc:
        return [[task.name, coupling, s.label(), "", train_seed, None, None, None, 0,
                 f"train_failed: {exc}"] for s in cfg.solver]
    for solver in cfg.solver:
        for eseed in cfg.eval.seeds:
            try:
                res = evaluate.evaluate(model, task.name, solver, n=cfg.eval.n_eval,
                                        seed=eseed, metric_names=metric_names,
                                        task_params=task.params)
                rows.append([task.name, coupling, solver.label(), res["nfe"], train_seed,
                             res.get("w2_squared"), res.get("tv"), res.get("straightness"),
                             cfg.eval.n_eval, "ok"])
            except ode.SolverError as exc:
                rows.append([task.name, coupling, solver.label(), "", train_seed,
                             None, None, None, cfg.eval.n_eval, f"solver_failed: {exc}"])
    return rows


def cmd_sweep(args):
    raw = io.load_json(args.config)
    if not isinstance(raw, dict):
        raise io.ConfigError("sweep config must be a JSON object")
    sweep = raw.pop("sweep", {})
    io._strict(sweep, {"couplings", "seeds"}, "sweep")
    cfg = io.config_from_dict(raw)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    couplings = list(sweep.get("couplings", ["independent", "ot", "cot"]))
    seeds = [int(s) for s in sweep.get("seeds", [cfg.train.seed])]
    for c in couplings:
        if c not in ("independent", "ot", "cot"):
            raise io.ConfigError(f"unknown coupling {c!r} in sweep.couplings")
    cells = [(c, s) for s in seeds for c in couplings]
    workers = max(1, int(os.environ.get("COTFLOW_THREADS", "1") or 1))
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(cells))) as pool:
            results = list(pool.map(_sweep_cell, [cfg] * len(cells), *zip(*cells)))
    else:
        results = [_sweep_cell(cfg, c, s) for c, s in cells]

    os.makedirs(cfg.output_dir, exist_ok=True)
    out = os.path.join(cfg.output_dir, "sweep.csv")
    if os.path.exists(out):
        os.remove(out)
    rows = [r for cell in results for r in cell]
    io._append_rows(out, SWEEP_COLUMNS, rows)
    failed = sum(r[-1] != "ok" for r in rows)
    print(json.dumps({"rows": len(rows), "failed": failed, "out": out}))
    return EXIT_NUMERIC if failed else EXIT_OK


# -------------------------------------------------------------- ot-matrix

def cmd_ot_matrix(args):
    """Dump the conditional cost matrix and assignment of one seeded batch
    for each gamma, all sharing the same noise draw and condition permutation."""
    _check_task(args.task)
    try:
        gammas = [float(g) for g in args.gammas.split(",") if g.strip()]
    except ValueError:
        raise UsageError(f"--gammas expects comma-separated numbers, got {args.gammas!r}") from None
    if any(g < 0 for g in gammas):
        raise UsageError("gammas must be >= 0")
    ds = make_task(args.task, args.n, seed=args.seed, **_parse_params(args.param))
    K = args.K or default_clusters(args.task)
    c1 = fit_condition_processor(ds.conditions_raw, K, seed=args.seed)(ds.conditions_raw)
    rng = np.random.default_rng(args.seed)
    x0 = ds.prior.sample(args.n, rng)
    c0 = c1[rng.permutation(args.n)]
    os.makedirs(args.out_dir, exist_ok=True)
    assign_rows = []
    for g in gammas:
        eff = g
        if args.normalized:
            # g is given in scale-free units; convert to the raw cost weight
            eff = ot.normalized_gamma(x0, c0, ds.samples, c1, g)
        cost = ot.conditional_cost_matrix(x0, c0, ds.samples, c1, eff)
        plan = ot.solve_assignment(cost)
        path = os.path.join(args.out_dir, f"cost_gamma_{g:g}.csv")
        if os.path.exists(path):
            os.remove(path)
        io._append_rows(path, [f"col_{j}" for j in range(args.n)], cost.tolist())
        assign_rows += [[g, eff, i, int(j)] for i, j in enumerate(plan.assignment)]
    apath = os.path.join(args.out_dir, "assignments.csv")
    if os.path.exists(apath):
        os.remove(apath)
    io._append_rows(apath, ["gamma", "gamma_raw", "noise_row", "data_row"], assign_rows)
    print(json.dumps({"gammas": gammas, "n": args.n, "out_dir": args.out_dir}))
    return EXIT_OK


# ----------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="cotflow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic dataset CSV")
    g.add_argument("--task", required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--param", action="append", metavar="KEY=VALUE")
    g.add_argument("--out", default="dataset.csv")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a flow model from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--resume", action="store_true", help="continue from output_dir/checkpoint.json")
    t.add_argument("--output-dir")
    t.set_defaults(func=cmd_train)

    def solver_flags(sp):
        sp.add_argument("--solver", choices=ode.SOLVERS, default="euler")
        sp.add_argument("--steps", type=int, default=1)
        sp.add_argument("--n", type=int, default=2000)

    s = sub.add_parser("sample", help="generate samples from a checkpoint")
    s.add_argument("--ckpt", required=True)
    solver_flags(s)
    s.add_argument("--paths", action="store_true", help="write every integration state")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="samples.csv")
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("eval", help="score a checkpoint against fresh target draws")
    e.add_argument("--ckpt")
    e.add_argument("--task", required=True)
    e.add_argument("--metric", choices=("w2", "tv", "straightness"), default="w2")
    solver_flags(e)
    e.add_argument("--seeds", default="0")
    e.add_argument("--param", action="append", metavar="KEY=VALUE")
    e.add_argument("--out", default="metrics.csv")
    e.add_argument("--inject-samples", metavar="CSV",
                   help="score these samples instead of generating (testing hook)")
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("sweep", help="coupling x solver x NFE grid to a tidy CSV")
    w.add_argument("--config", required=True)
    w.add_argument("--output-dir")
    w.set_defaults(func=cmd_sweep)

    o = sub.add_parser("ot-matrix", help="cost matrices and assignments over a gamma sweep")
    o.add_argument("--task", default="moons")
    o.add_argument("--n", type=int, default=64)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--K", type=int)
    o.add_argument("--gammas", default="0,10,100,1000,10000")
    o.add_argument("--normalized", action="store_true",
                   help="gammas are in scale-normalised units")
    o.add_argument("--param", action="append", metavar="KEY=VALUE")
    o.add_argument("--out-dir", default="ot_matrix")
    o.set_defaults(func=cmd_ot_matrix)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, io.ConfigError, io.FormatError, FileNotFoundError) as exc:
        print(f"cotflow {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteLoss, ode.SolverError, FloatingPointError) as exc:
        print(f"cotflow {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"cotflow {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
