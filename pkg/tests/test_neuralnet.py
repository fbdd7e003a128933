import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermoreg.errors import ConfigError, DataError
from thermoreg.neuralnet import (
    AdamState, ConvLayer, Network, NetworkSpec, TrainConfig, TrainedNetwork, adam_step, conv1d_forward,
    same_padding, train, validation_split,
)
from thermoreg.transform import FeatureMatrix


def test_identity_kernel():
    x = np.array([[1.5], [-2.0], [0.25], [7.0]])
    w = np.zeros((3, 1, 1))
    w[1, 0, 0] = 1.0
    assert np.array_equal(conv1d_forward(x, w, np.zeros(1)), x)


def test_ones_kernel_hand_values():
    out = conv1d_forward(np.array([[1.0], [2.0], [3.0]]), np.ones((3, 1, 1)), np.zeros(1))
    assert out[:, 0].tolist() == [3.0, 6.0, 5.0]


def test_even_kernel_pads_right():
    assert same_padding(2) == (0, 1) and same_padding(3) == (1, 1)
    out = conv1d_forward(np.array([[1.0], [2.0], [3.0]]), np.ones((2, 1, 1)), np.zeros(1))
    assert out[:, 0].tolist() == [3.0, 5.0, 3.0]


def test_conv_shape_mismatch():
    with pytest.raises(DataError):
        conv1d_forward(np.zeros((4, 2)), np.zeros((3, 1, 1)), np.zeros(1))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.sampled_from([2, 3]), st.integers(1, 4), st.integers(1, 5), st.integers(0, 999))
def test_same_padding_preserves_length(L, k, c_in, c_out, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, L, c_in))
    out = conv1d_forward(x, rng.normal(size=(k, c_in, c_out)), rng.normal(size=c_out))
    assert out.shape == (2, L, c_out)
    # direct sum over the zero-padded input
    left, _ = same_padding(k)
    xp = np.zeros((2, L + k - 1, c_in))
    xp[:, left:left + L] = x
    w = rng.normal(size=(k, c_in, c_out))
    b = rng.normal(size=c_out)
    direct = np.stack([np.einsum("bjc,jcf->bf", xp[:, t:t + k], w) + b for t in range(L)], axis=1)
    assert np.allclose(conv1d_forward(x, w, b), direct, atol=1e-12)


def tiny_spec(L=3, layers=1, k=2, l2=0.0):
    return NetworkSpec(tuple(ConvLayer(8, k, l2) for _ in range(layers)), L, dense_units=6)


def test_layer_limits():
    with pytest.raises(ConfigError):
        ConvLayer(4, 2)
    with pytest.raises(ConfigError):
        ConvLayer(16, 5)


def test_zero_network_predicts_zero():
    net = Network(tiny_spec())
    X = np.random.default_rng(0).normal(size=(5, 3))
    assert np.array_equal(net.forward(np.zeros(net.size), X), np.zeros(5))


def test_single_path_hand_trace():
    net = Network(NetworkSpec((ConvLayer(8, 3, 0.0),), 3))
    flat = np.zeros(net.size)
    p = net.views(flat)
    p["conv0.w"][1, 0, 0] = 0.5           # filter 0 scales its input by 0.5
    for t, v in enumerate((0.1, 0.2, 0.3)):
        p["dense.w"][t * 8 + 0, 0] = v     # flattened index is position * channels + channel
    p["dense.b"][0] = 0.05
    p["out.w"][0, 0] = 2.0
    p["out.b"][0] = 0.3
    # conv: (0.5, -1, 1.5) -> relu (0.5, 0, 1.5); hidden = 0.05 + 0.45 + 0.05 = 0.55
    got = net.forward(flat, np.array([[1.0, -2.0, 3.0]]))[0]
    assert got == pytest.approx(2 * 0.55 + 0.3, abs=1e-9)


def test_rows_are_independent():
    net = Network(tiny_spec(layers=2))
    flat = net.init_params(3)
    X = np.random.default_rng(1).normal(size=(6, 3))
    batch = net.forward(flat, X)
    single = np.array([net.forward(flat, X[i:i + 1])[0] for i in range(6)])
    assert np.allclose(batch, single, atol=1e-14)
    with pytest.raises(DataError):
        net.forward(flat, np.zeros((2, 4)))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([2, 3]), st.integers(1, 2), st.sampled_from([0.0, 0.05]))
def test_gradient_matches_finite_differences(seed, k, layers, l2):
    rng = np.random.default_rng(seed)
    net = Network(tiny_spec(L=4, layers=layers, k=k, l2=l2))
    flat = net.init_params(seed) + rng.normal(0, 0.05, net.size)
    X, y = rng.normal(size=(5, 4)), rng.normal(size=5)
    _, grad, _ = net.loss_and_grad(flat, X, y)
    h = 1e-5
    fd = np.empty(net.size)
    for i in range(net.size):
        e = np.zeros(net.size)
        e[i] = h
        fd[i] = (net.loss_and_grad(flat + e, X, y)[0] - net.loss_and_grad(flat - e, X, y)[0]) / (2 * h)
    rel = np.abs(grad - fd) / np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1e-6)
    assert rel.max() < 1e-4


def test_perfect_fit_has_zero_loss_and_gradient():
    net = Network(tiny_spec())
    flat = net.init_params(0)
    X = np.random.default_rng(2).normal(size=(4, 3))
    loss, grad, mse = net.loss_and_grad(flat, X, net.forward(flat, X))
    assert loss == 0.0 and mse == 0.0 and np.abs(grad).max() == 0.0


def test_loss_decomposes_into_data_and_penalty():
    spec = tiny_spec(layers=2, l2=0.01)
    net = Network(spec)
    flat = net.init_params(4)
    X = np.random.default_rng(3).normal(size=(4, 3))
    y = np.random.default_rng(4).normal(size=4)
    loss, _, mse = net.loss_and_grad(flat, X, y)
    p = net.views(flat)
    penalty = 0.01 * sum(float((p[f"conv{i}.w"] ** 2).sum()) for i in range(2))
    assert mse == pytest.approx(np.mean((net.forward(flat, X) - y) ** 2), rel=1e-14)
    assert loss - mse == pytest.approx(penalty, rel=1e-12)
    loss0, _, _ = net.loss_and_grad(flat, X, net.forward(flat, X))
    assert loss0 == pytest.approx(penalty, rel=1e-12)


def test_adam_zero_gradient():
    params = np.array([1.0, -2.0, 3.0])
    state = AdamState.zeros(3)
    adam_step(params, np.zeros(3), state, lr=0.1)
    assert params.tolist() == [1.0, -2.0, 3.0] and state.t == 1


def test_adam_one_step_hand_value():
    params = np.array([1.0, 1.0])
    g = np.array([0.5, -4.0])
    adam_step(params, g, AdamState.zeros(2), lr=0.001)
    # bias-corrected m = g and v = g^2, so the step is lr * g / (|g| + eps)
    expect = 1.0 - 0.001 * g / (np.abs(g) + 1e-8)
    assert np.allclose(params, expect, atol=1e-15)


def memorization_data():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(8, 3))
    return FeatureMatrix(X, ("a", "b", "c"), rng.normal(size=8))


def test_training_is_deterministic():
    m = memorization_data()
    cfg = TrainConfig(epochs=20, batch_size=3, seed=7)
    a, b = train(tiny_spec(), cfg, m), train(tiny_spec(), cfg, m)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.history, b.history)
    c = train(tiny_spec(), TrainConfig(epochs=20, batch_size=3, seed=8), m)
    assert not np.array_equal(a.weights, c.weights)


def test_memorizes_eight_rows():
    m = memorization_data()
    spec = NetworkSpec((ConvLayer(16, 2, 0.0),), 3)
    net = train(spec, TrainConfig(epochs=2000, batch_size=32, seed=0), m)
    final = np.mean((net.predict(m, final=True) - m.target) ** 2)
    assert final < 1e-3
    assert net.history[1999, 0] < net.history[9, 0]


def test_history_checkpoint_and_files(tmp_path):
    m = memorization_data()
    tr, va = validation_split(8, 0.25, 0)
    assert len(va) == 2 and not set(tr) & set(va)
    net = train(tiny_spec(), TrainConfig(epochs=15, batch_size=4), m.take(tr), m.take(va))
    assert net.history.shape == (15, 2)
    assert net.best_epoch == int(np.argmin(net.history[:, 1]))
    path = tmp_path / "h.csv"
    net.write_history(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss" and len(lines) == 16
    net.save(tmp_path / "n.json")
    back = TrainedNetwork.load(tmp_path / "n.json")
    assert np.array_equal(back.predict(m), net.predict(m))


def test_train_feature_count_mismatch():
    with pytest.raises(ConfigError):
        train(tiny_spec(L=5), TrainConfig(epochs=1), memorization_data())
