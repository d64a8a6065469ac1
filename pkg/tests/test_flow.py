import numpy as np
import pytest
from hypothesis import given, strategies as st

from cotflow import flow, io, nn
from cotflow.flow import TrainConfig, TrainState
from cotflow.tasks import ConditionedDataset, make_task


class FixedNoise:
    def __init__(self, x0):
        self.x0 = np.asarray(x0, dtype=float)
        self.dim = self.x0.shape[1]

    def sample(self, n, rng):
        return np.repeat(self.x0, n, axis=0)


def test_interpolant_examples():
    x0, x1 = np.array([0.0, 0.0]), np.array([2.0, 4.0])
    it = flow.make_interpolant(x0, x1, 0.25)
    assert it.x_t.tolist() == [0.5, 1.0] and it.target.tolist() == [2.0, 4.0]
    with pytest.raises(ValueError):
        flow.make_interpolant(x0, x1, 1.5)
    with pytest.raises(ValueError):
        flow.make_interpolant(x0, x1[:1], 0.5)


@given(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3),
       st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3))
def test_interpolant_endpoints_exact(a, b):
    assert np.array_equal(flow.make_interpolant(a, b, 0.0).x_t, np.asarray(a))
    assert np.array_equal(flow.make_interpolant(a, b, 1.0).x_t, np.asarray(b))


def test_config_validation():
    for bad in (dict(steps=-1), dict(batch_size=0), dict(coupling="sinkhorn"), dict(K=0),
                dict(eval_every=0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
    assert TrainConfig().clusters_for("fork") == 2
    assert TrainConfig(K=5).clusters_for("fork") == 5


def test_single_pair_converges():
    ds = ConditionedDataset(np.array([[1.0, -2.0]]), np.array([[0.5]]), "single",
                            FixedNoise([[0.3, 0.4]]))
    cfg = TrainConfig(steps=1500, batch_size=1, coupling="independent", seed=0,
                      optimizer=nn.OptimizerConfig(learning_rate=1e-2))
    model, log = flow.train(ds, cfg, t_fixed=0.5)
    assert log[-1]["loss"] < 1e-6
    x_t = 0.5 * np.array([1.0, -2.0]) + 0.5 * np.array([0.3, 0.4])
    assert nn.forward(model, 0.5, x_t, [0.5]) == pytest.approx([0.7, -2.4], abs=1e-3)


def test_cot_training_deterministic(backend):
    ds = make_task("moons", 400, seed=0)
    cfg = TrainConfig(steps=15, batch_size=32, coupling="cot", seed=4)
    _, a = flow.train(ds, cfg)
    _, b = flow.train(ds, cfg)
    assert [r["loss"] for r in a] == [r["loss"] for r in b]


def test_zero_steps_and_log_length():
    ds = make_task("fork", 200, seed=0)
    cfg = TrainConfig(steps=0, coupling="ot", seed=2)
    model, log = flow.train(ds, cfg)
    assert log == []
    assert np.array_equal(model.parameters, nn.init_model(flow.build_model_spec(ds, cfg)).parameters)
    _, log = flow.train(ds, TrainConfig(steps=7, batch_size=16, coupling="ot"))
    assert [r["step"] for r in log] == list(range(1, 8))


def test_eval_hook_and_checkpoint_callback():
    ds = make_task("fork", 200, seed=0)
    seen = []
    cfg = TrainConfig(steps=6, batch_size=8, coupling="independent", eval_every=3, checkpoint_every=2)
    _, log = flow.train(ds, cfg, eval_fn=lambda m: {"w2_nfe1": 1.0},
                        checkpoint_fn=lambda st: seen.append(st.step))
    assert [("w2_nfe1" in r) for r in log] == [False, False, True, False, False, True]
    assert seen == [2, 4, 6]


def test_cot_needs_condition_processor():
    ds = make_task("fork", 50, seed=0)
    cfg = TrainConfig(steps=1, batch_size=4, coupling="cot")
    model = nn.init_model(flow.build_model_spec(ds, cfg))
    with pytest.raises(ValueError):
        flow.train_step(model, ds, cfg, None, np.random.default_rng(0))


def test_non_finite_loss_raises():
    ds = make_task("fork", 50, seed=0)
    cfg = TrainConfig(steps=1, batch_size=4, coupling="independent")
    state = flow.init_state(ds, cfg)
    state.model.parameters[:] = np.nan
    with pytest.raises(flow.NonFiniteLoss):
        flow.train(ds, cfg, state)


@pytest.mark.parametrize("coupling", ["independent", "ot", "cot"])
def test_resume_matches_uninterrupted(tmp_path, coupling):
    ds = make_task("moons", 500, seed=1)
    full_cfg = TrainConfig(steps=20, batch_size=16, coupling=coupling, seed=3)
    ref_model, ref_log = flow.train(ds, full_cfg)

    half = TrainConfig(steps=9, batch_size=16, coupling=coupling, seed=3)
    state = flow.init_state(ds, half)
    flow.train(ds, half, state)
    path = tmp_path / "ck.json"
    io.save_checkpoint(state.model, state.cond, str(path), step=state.step, rng=state.rng)
    ck = io.load_checkpoint(str(path))
    resumed = TrainState(ck.model, ck.rng(), ck.cond, ck.step)
    model, tail = flow.train(ds, full_cfg, resumed)
    assert [r["loss"] for r in state.log + tail] == [r["loss"] for r in ref_log]
    assert np.array_equal(model.parameters, ref_model.parameters)


def test_data_side_of_batch_is_the_sampled_rows():
    ds = make_task("fork", 100, seed=0)
    cfg = TrainConfig(steps=1, batch_size=10, coupling="ot", seed=0)
    rng = np.random.default_rng([0, 1])
    idx = np.random.default_rng([0, 1]).integers(0, 100, size=10)
    from cotflow import coupling
    b = coupling.pair("ot", ds.samples[idx], ds.conditions_raw[idx], None, ds.prior, cfg.cost_spec,
                      np.random.default_rng(5))
    assert np.array_equal(b.x1, ds.samples[idx])
    model = nn.init_model(flow.build_model_spec(ds, cfg))
    flow.train_step(model, ds, cfg, None, rng)
    assert model.adam_state.step == 1
