import json
import os

import numpy as np
import pytest

from cotflow import cli, io


def _config(tmp_path, name="c.json", **train):
    cfg = {"task": {"name": "fork", "n_train": 2000},
           "train": {"steps": 200, "batch_size": 64, "coupling": "cot", **train},
           "output_dir": str(tmp_path / "run")}
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _last_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_gen_writes_rows_and_is_deterministic(tmp_path):
    a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    assert cli.main(["gen", "--task", "fork", "--n", "100", "--seed", "1", "--out", a]) == 0
    assert cli.main(["gen", "--task", "fork", "--n", "100", "--seed", "1", "--out", b]) == 0
    lines = open(a).read().splitlines()
    assert len(lines) == 101 and lines[0] == "x_0,c_0,format_version"
    assert open(a).read() == open(b).read()


def test_gen_bad_task(tmp_path, capsys):
    assert cli.main(["gen", "--task", "spiral", "--n", "5", "--out", str(tmp_path / "x.csv")]) == 2
    assert "unknown task" in capsys.readouterr().err


def test_gen_task_params(tmp_path):
    out = str(tmp_path / "t.csv")
    assert cli.main(["gen", "--task", "traj_fork", "--n", "10", "--param", "horizon=3",
                     "--param", "sigma=0", "--out", out]) == 0
    x, c = io.read_dataset(out)
    assert x.shape == (10, 6) and c.shape == (10, 2)
    assert cli.main(["gen", "--task", "fork", "--n", "3", "--param", "bogus=1", "--out", out]) == 2


def test_train_smoke_and_default_k(tmp_path, capsys):
    assert cli.main(["train", "--config", _config(tmp_path)]) == 0
    summary = _last_json(capsys)
    run = tmp_path / "run"
    assert os.path.exists(run / "checkpoint.json")
    assert len(io.read_log(str(run / "train_log.csv"))) == 200
    assert summary["K"] == 2
    saved = json.loads((run / "config.json").read_text())
    assert saved["train"]["K"] == 2
    assert io.load_checkpoint(str(run / "checkpoint.json")).step == 200


def test_train_resume_matches_uninterrupted(tmp_path):
    full = _config(tmp_path, "full.json")
    assert cli.main(["train", "--config", full, "--output-dir", str(tmp_path / "full")]) == 0
    part = _config(tmp_path, "part.json", steps=120, checkpoint_every=40)
    assert cli.main(["train", "--config", part, "--output-dir", str(tmp_path / "resumed")]) == 0
    # continue the same run to 200 steps
    assert cli.main(["train", "--config", _config(tmp_path, "more.json", checkpoint_every=40),
                     "--output-dir", str(tmp_path / "resumed"), "--resume"]) == 0
    a = open(tmp_path / "full" / "train_log.csv").read()
    b = open(tmp_path / "resumed" / "train_log.csv").read()
    assert a == b
    ca = io.load_checkpoint(str(tmp_path / "full" / "checkpoint.json"))
    cb = io.load_checkpoint(str(tmp_path / "resumed" / "checkpoint.json"))
    assert np.array_equal(ca.model.parameters, cb.model.parameters)


def test_resume_without_checkpoint(tmp_path):
    assert cli.main(["train", "--config", _config(tmp_path), "--resume"]) == 2


def test_train_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"task": "fork", "train": {"stepz": 3}}')
    assert cli.main(["train", "--config", str(bad)]) == 2
    assert "stepz" in capsys.readouterr().err
    bad.write_text('{"task": "fork",\n "train": }')
    assert cli.main(["train", "--config", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_numeric_failure_exit_code(tmp_path):
    cfg = _config(tmp_path, learning_rate=1e300, steps=50, coupling="independent")
    assert cli.main(["train", "--config", cfg]) == 3


@pytest.fixture()
def small_ckpt(tmp_path):
    assert cli.main(["train", "--config", _config(tmp_path, steps=20)]) == 0
    return str(tmp_path / "run" / "checkpoint.json")


def test_sample_nfe(small_ckpt, tmp_path, capsys):
    out = str(tmp_path / "s.csv")
    assert cli.main(["sample", "--ckpt", small_ckpt, "--solver", "euler", "--steps", "1",
                     "--n", "50", "--out", out]) == 0
    assert _last_json(capsys)["nfe"] == 1
    assert cli.main(["sample", "--ckpt", small_ckpt, "--solver", "midpoint", "--steps", "1",
                     "--n", "50", "--out", out, "--paths"]) == 0
    assert _last_json(capsys)["nfe"] == 2
    header, rows = io._read_rows(out)
    assert header == ["sample_id", "t", "x_0"] and len(rows) == 100


def test_sample_missing_checkpoint(tmp_path):
    assert cli.main(["sample", "--ckpt", str(tmp_path / "none.json")]) == 2


def test_eval_injected_identical_sets(tmp_path, capsys):
    target = str(tmp_path / "t.csv")
    # evaluation draws for seed s use dataset seed 1_000_003 + s
    assert cli.main(["gen", "--task", "fork", "--n", "80", "--seed", "1000003", "--out", target]) == 0
    out = str(tmp_path / "m.csv")
    assert cli.main(["eval", "--task", "fork", "--n", "80", "--seeds", "0",
                     "--inject-samples", target, "--out", out]) == 0
    (rec,) = io.read_metrics(out)
    assert rec.w2_squared == 0.0


def test_eval_tv_two_mode_set(tmp_path):
    data = str(tmp_path / "tf.csv")
    assert cli.main(["gen", "--task", "traj_fork", "--n", "30", "--seed", "1000003",
                     "--param", "sigma=0", "--out", data]) == 0
    out = str(tmp_path / "m.csv")
    assert cli.main(["eval", "--task", "traj_fork", "--metric", "tv", "--n", "30",
                     "--param", "sigma=0", "--inject-samples", data, "--out", out]) == 0
    assert io.read_metrics(out)[0].tv > 0


def test_eval_two_seeds_two_rows(small_ckpt, tmp_path):
    out = str(tmp_path / "m.csv")
    assert cli.main(["eval", "--ckpt", small_ckpt, "--task", "fork", "--n", "100",
                     "--seeds", "0,1", "--out", out]) == 0
    recs = io.read_metrics(out)
    assert [r.seed for r in recs] == [0, 1] and all(r.coupling == "cot" for r in recs)
    assert cli.main(["eval", "--ckpt", small_ckpt, "--task", "fork", "--metric", "straightness",
                     "--solver", "euler", "--steps", "10", "--n", "50", "--out", out]) == 0
    assert io.read_metrics(out)[-1].straightness >= 0
    assert cli.main(["eval", "--task", "fork", "--out", out]) == 2


def _sweep_config(tmp_path):
    cfg = {"task": {"name": "fork", "n_train": 1000},
           "train": {"steps": 30, "batch_size": 32},
           "solver": [{"kind": "euler", "steps": 1}, {"kind": "euler", "steps": 2}],
           "eval": {"n_eval": 100},
           "sweep": {"couplings": ["independent", "ot", "cot"], "seeds": [0]},
           "output_dir": str(tmp_path / "sw")}
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_sweep_rows_and_determinism(tmp_path):
    cfg = _sweep_config(tmp_path)
    assert cli.main(["sweep", "--config", cfg]) == 0
    header, rows = io._read_rows(str(tmp_path / "sw" / "sweep.csv"))
    assert len(rows) == 6 and header[-1] == "status"
    assert {(r[1], r[2]) for r in rows} == {(c, s) for c in ("independent", "ot", "cot")
                                           for s in ("euler1", "euler2")}
    first = open(tmp_path / "sw" / "sweep.csv").read()
    assert cli.main(["sweep", "--config", cfg]) == 0
    assert open(tmp_path / "sw" / "sweep.csv").read() == first


def test_sweep_parallel_matches_serial(tmp_path, monkeypatch):
    cfg = _sweep_config(tmp_path)
    assert cli.main(["sweep", "--config", cfg]) == 0
    serial = open(tmp_path / "sw" / "sweep.csv").read()
    monkeypatch.setenv("COTFLOW_THREADS", "2")
    assert cli.main(["sweep", "--config", cfg]) == 0
    assert open(tmp_path / "sw" / "sweep.csv").read() == serial


def test_sweep_records_solver_failure(tmp_path):
    cfg = json.loads(open(_sweep_config(tmp_path)).read())
    cfg["solver"] = [{"kind": "dopri5", "max_nfe": 3}]
    path = tmp_path / "fail.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["sweep", "--config", str(path)]) == 3
    header, rows = io._read_rows(str(tmp_path / "sw" / "sweep.csv"))
    assert len(rows) == 3 and all(r[-1].startswith("solver_failed") for r in rows)


def test_ot_matrix_outputs(tmp_path):
    out = tmp_path / "otm"
    assert cli.main(["ot-matrix", "--n", "16", "--gammas", "0,10", "--out-dir", str(out)]) == 0
    header, rows = io._read_rows(str(out / "cost_gamma_10.csv"))
    assert len(rows) == 16 and len(header) == 16
    _, assign = io._read_rows(str(out / "assignments.csv"))
    assert len(assign) == 32
    assert cli.main(["ot-matrix", "--gammas", "-1", "--out-dir", str(out)]) == 2


@pytest.mark.slow
def test_sample_dopri5_on_trained_moons(tmp_path, capsys):
    from cotflow import experiments
    from cotflow.tasks import make_task
    model, _ = experiments.trained("moons", "cot", 0)
    ds = make_task("moons", experiments.N_TRAIN, seed=0)
    ck = str(tmp_path / "moons.json")
    io.save_checkpoint(model, None, ck, task=io.dataset_info(ds, experiments.N_TRAIN, 0))
    assert cli.main(["sample", "--ckpt", ck, "--solver", "dopri5", "--n", "2000",
                     "--out", str(tmp_path / "s.csv")]) == 0
    nfe = _last_json(capsys)["nfe"]
    print("dopri5 nfe", nfe)
    assert 20 <= nfe <= 500
