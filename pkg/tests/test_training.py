import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from stablesim.dynamics import Dataset
from stablesim.errors import BadConfigError, NonFiniteError, ShapeMismatchError
from stablesim.models import ModelConfig, init_model
from stablesim.training import (
    AdamState, TrainConfig, adam_step, check_model_gradients, clip_gradients, psnr,
    sample_kink_free, train,
)


def tiny(variant="single", **kw):
    base = dict(variant=variant, input_dim=1, output_dim=1, lift_dim=6, rff_dim=8,
                mu_hidden=8, nu_hidden=8, hidden_dim=3, bandwidth=1.0)
    base.update(kw)
    return init_model(ModelConfig(**base), 0)


def test_adam_zero_gradient_keeps_params():
    p = [np.array([1.0, -2.0])]
    new, state = adam_step(p, [np.zeros(2)], AdamState.zeros_like(p), TrainConfig())
    assert np.array_equal(new[0], p[0]) and state.t == 1


def test_adam_first_step_closed_form():
    cfg = TrainConfig(learning_rate=0.1)
    new, state = adam_step([np.zeros(1)], [np.ones(1)], AdamState.zeros_like([np.zeros(1)]), cfg)
    assert new[0][0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-14)
    assert state.t == 1


def test_adam_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        adam_step([np.zeros(2)], [np.zeros(3)], AdamState.zeros_like([np.zeros(2)]), TrainConfig())


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 6, elements=st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-6)))
def test_adam_first_step_moves_against_gradient(g):
    p = [np.zeros(6)]
    new, _ = adam_step(p, [g], AdamState.zeros_like(p), TrainConfig())
    assert np.array_equal(np.sign(new[0]), -np.sign(g))


def test_clip_examples():
    g = [np.array([0.3, 0.4])]
    assert np.array_equal(clip_gradients(g, 1.0)[0], g[0])
    assert np.allclose(clip_gradients([np.array([3.0, 4.0])], 1.0)[0], [0.6, 0.8])
    assert not clip_gradients([np.zeros(3)], 1.0)[0].any()


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 5, elements=st.floats(-100, 100)), st.floats(0.01, 50))
def test_clip_idempotent(g, c):
    once = clip_gradients([g], c)
    twice = clip_gradients(once, c)
    assert np.allclose(once[0], twice[0], rtol=1e-12, atol=0)
    assert np.linalg.norm(once[0]) <= c * (1 + 1e-12)


def test_psnr_examples():
    img = np.random.default_rng(0).uniform(size=(4, 4, 3))
    assert psnr(img, img) == math.inf
    t = np.zeros((10, 10))
    assert psnr(t + 0.1, t) == pytest.approx(20.0)
    assert psnr(t + math.sqrt(0.001), t) == pytest.approx(30.0)
    assert psnr(t - 5.0, t) == math.inf  # clamped to [0, 1] first
    with pytest.raises(ShapeMismatchError):
        psnr(np.zeros(3), np.zeros(4))


def test_config_validation():
    for bad in (dict(learning_rate=-1.0), dict(adam_betas=(1.0, 0.9)), dict(iterations=0),
                dict(batch_size=0), dict(clip_norm=0.0), dict(loss="l1"), dict(adam_eps=0.0)):
        with pytest.raises(BadConfigError):
            TrainConfig(**bad).validate()


def test_constant_targets_are_learned():
    x = np.linspace(-1, 1, 32)[:, None]
    data = Dataset(x, np.full((32, 1), 0.37))
    _, hist = train(tiny(), data, TrainConfig(learning_rate=1e-2, iterations=200))
    assert hist.final_loss < 1e-4


def test_zero_learning_rate_keeps_parameters():
    m = tiny("two")
    before = [p.data.copy() for p in m.parameters()]
    data = Dataset(np.linspace(-1, 1, 8)[:, None], np.linspace(0, 1, 8)[:, None])
    train(m, data, TrainConfig(learning_rate=0.0, iterations=25))
    for p, b in zip(m.parameters(), before):
        assert np.array_equal(p.data, b)


@pytest.mark.parametrize("variant", ["single", "two", "rff"])
def test_loss_decreases(variant):
    x = np.linspace(-1, 1, 64)[:, None]
    data = Dataset(x, np.sin(3 * x))
    _, hist = train(tiny(variant), data, TrainConfig(learning_rate=3e-3, iterations=300))
    first, last = np.mean(hist.losses[:30]), np.mean(hist.losses[-30:])
    assert last < first


def test_metrics_csv_format_and_reproducibility(tmp_path):
    x = np.linspace(-1, 1, 40)[:, None]
    data = Dataset(x, 0.5 + 0.4 * np.cos(2 * x))
    paths = []
    for k in range(2):
        path = tmp_path / f"m{k}.csv"
        train(tiny(), data, TrainConfig(iterations=250, batch_size=16, seed=3), metrics_path=path)
        paths.append(path)
    raw = paths[0].read_bytes()
    assert raw == paths[1].read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "step,loss,psnr" and len(lines) == 251
    assert lines[100].split(",")[2] != "" and lines[99].split(",")[2] == ""
    assert lines[250].split(",")[2] != ""  # last step always scored


def test_minibatch_seed_changes_trajectory():
    x = np.linspace(-1, 1, 40)[:, None]
    data = Dataset(x, x ** 2)
    _, h1 = train(tiny(), data, TrainConfig(iterations=20, batch_size=8, seed=1))
    _, h2 = train(tiny(), data, TrainConfig(iterations=20, batch_size=8, seed=2))
    assert h1.losses != h2.losses


def test_cross_entropy_training():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (64, 1))
    labels = (x[:, 0] > 0).astype(float)
    m = tiny(output_dim=2)
    _, hist = train(m, Dataset(x, labels), TrainConfig(learning_rate=1e-2, iterations=200, loss="cross_entropy"))
    assert hist.final_loss < hist.losses[0] and not hist.psnr


def test_non_finite_loss_rolls_back(tmp_path):
    m = tiny()
    data = Dataset(np.zeros((4, 1)), np.full((4, 1), np.inf))
    before = [p.data.copy() for p in m.parameters()]
    with pytest.raises(NonFiniteError) as info:
        train(m, data, TrainConfig(iterations=5), metrics_path=tmp_path / "m.csv")
    assert info.value.step == 1
    for p, b in zip(m.parameters(), before):
        assert np.array_equal(p.data, b)
    assert (tmp_path / "m.csv").read_text().splitlines()[1].startswith("1,")


def test_empty_dataset_rejected():
    with pytest.raises(BadConfigError):
        train(tiny(), Dataset(np.zeros((0, 1)), np.zeros((0, 1))), TrainConfig())


@pytest.mark.parametrize("variant", ["single", "two", "rff"])
def test_model_gradients_check_out(variant):
    cfg = ModelConfig(variant, 2, 3, lift_dim=8, rff_dim=16, hidden_dim=3, mu_hidden=16, nu_hidden=16)
    m = init_model(cfg, 1)
    rng = np.random.default_rng(1)
    x = sample_kink_free(m, 5, rng)
    y = rng.uniform(-1, 1, (5, 3))
    assert check_model_gradients(m, x, y) <= 1e-6
    assert check_model_gradients(m, x, y, corrupt=True) > 1e-6
