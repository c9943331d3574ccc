import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from gru_attitude import gru
from gru_attitude.disturbance import DisturbanceSeries
from gru_attitude.errors import InsufficientData, ModelFormatError


def small_net(seed=0, layers=1, hidden=4):
    net = gru.init_network(3, hidden, layers, 3, np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1)
    for p in net.params():
        p += 0.1 * rng.standard_normal(p.shape)  # nonzero biases too
    return net


def zero_layer(hidden=3, inp=2):
    return gru.GruLayerParams(np.zeros((3 * hidden, inp)), np.zeros((3 * hidden, hidden)), np.zeros(3 * hidden))


@given(arrays(float, 3, elements=st.floats(-10, 10)), arrays(float, 2, elements=st.floats(-10, 10)))
def test_zero_parameter_cell_halves_state(h, u):
    out = gru.gru_cell_step(zero_layer(), u, h)
    assert np.array_equal(out, 0.5 * h)


def test_gate_views():
    layer = zero_layer(hidden=2, inp=3)
    layer.wu[:] = np.arange(18).reshape(6, 3)
    assert layer.W_uz.shape == (2, 3)
    np.testing.assert_array_equal(layer.W_ur, layer.wu[2:4])
    np.testing.assert_array_equal(layer.b_h, layer.b[4:])


def test_cell_matches_gate_equations():
    rng = np.random.default_rng(5)
    n, m = 4, 3
    layer = gru.GruLayerParams(rng.standard_normal((3 * n, m)), rng.standard_normal((3 * n, n)),
                               rng.standard_normal(3 * n))
    u, h = rng.standard_normal(m), rng.standard_normal(n)
    sig = lambda x: 1 / (1 + np.exp(-x))
    z = sig(layer.W_uz @ u + layer.W_hz @ h + layer.b_z)
    r = sig(layer.W_ur @ u + layer.W_hr @ h + layer.b_r)
    c = np.tanh(layer.W_uh @ u + layer.W_hh @ (r * h) + layer.b_h)
    np.testing.assert_allclose(gru.gru_cell_step(layer, u, h), (1 - z) * h + z * c, rtol=1e-13)


def test_glorot_bounds_and_shapes():
    rng = np.random.default_rng(0)
    w = gru.glorot_init((128, 3), rng)
    limit = math.sqrt(6 / 131)
    assert w.shape == (128, 3) and np.abs(w).max() <= limit
    net = gru.init_network(3, 8, 3, 3, rng)
    assert [p.shape for p in net.params()][:6] == [(24, 3), (24, 8), (24,), (24, 8), (24, 8), (24,)]
    assert not net.layers[0].b.any()


def test_batch_and_single_window_forward_agree():
    net = small_net(layers=2, hidden=5)
    X = np.random.default_rng(2).standard_normal((7, 4, 3))
    Y, _ = gru.forward_batch(net, X)
    for i in range(7):
        np.testing.assert_allclose(gru.forward_window(net, X[i]), Y[i], atol=1e-14)


def numeric_grad(net, X, T, delta, eps=1e-5):
    grads = []
    for p in net.params():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + eps
            up = gru.huber_loss(T, gru.forward_batch(net, X)[0], delta)
            p[idx] = old - eps
            down = gru.huber_loss(T, gru.forward_batch(net, X)[0], delta)
            p[idx] = old
            g[idx] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


@pytest.mark.parametrize("layers", [1, 2])
def test_bptt_matches_finite_differences(layers):
    net = small_net(layers=layers)
    rng = np.random.default_rng(9)
    X, T = rng.standard_normal((4, 3, 3)), rng.standard_normal((4, 3))
    _, analytic = gru.backward(net, X, T, 1.0)
    numeric = numeric_grad(net, X, T, 1.0)
    for (name, _), a, n in zip(net.named_params(), analytic, numeric):
        rel = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1e-8)
        assert rel.max() < 1e-5, name


def test_huber_values_and_gradient():
    assert gru.huber_loss([0.0], [0.5]) == pytest.approx(0.125)
    assert gru.huber_loss([0.0], [3.0]) == pytest.approx(2.5)
    assert gru.huber_loss(np.zeros(3), np.array([0.5, -3.0, 0.0])) == pytest.approx(2.625)
    np.testing.assert_array_equal(gru.huber_grad([0, 0, 0], [0.5, -3.0, 2.0]), [0.5, -1.0, 1.0])
    with pytest.raises(ValueError):
        gru.huber_loss([0.0], [1.0], delta=0)


@given(st.floats(-5, 5), st.floats(0.1, 3))
def test_huber_continuous_at_threshold(y, delta):
    a = gru.huber_loss([y], [y + delta * (1 - 1e-9)], delta)
    b = gru.huber_loss([y], [y + delta * (1 + 1e-9)], delta)
    assert a == pytest.approx(b, rel=1e-6)


def test_adam_first_step_moves_by_lr():
    p = [np.array([1.0, -2.0])]
    state = gru.AdamState.zeros_like(p)
    gru.adam_step(p, [np.array([0.3, -7.0])], state, lr=0.01)
    np.testing.assert_allclose(p[0], [0.99, -1.99], rtol=1e-6)
    assert state.step == 1


def test_adam_minimizes_quadratic():
    p = [np.array([3.0, -4.0])]
    state = gru.AdamState.zeros_like(p)
    for _ in range(2000):
        gru.adam_step(p, [2 * p[0]], state, lr=0.05)
    assert np.abs(p[0]).max() < 1e-2


def test_early_stopping_counts_past_patience():
    es = gru.EarlyStopping(2)
    assert [es.update(x) for x in [5, 4, 4, 4, 4]] == [False, False, False, False, True]


def test_make_windows():
    X, Y = gru.make_windows(np.arange(8.0)[:, None], 3)
    assert X.shape == (5, 3, 1)
    np.testing.assert_array_equal(X[1, :, 0], [1, 2, 3])
    np.testing.assert_array_equal(Y[:, 0], [3, 4, 5, 6, 7])
    with pytest.raises(InsufficientData):
        gru.make_windows(np.zeros((3, 1)), 3)


def test_normalization_zero_variance_axis():
    mean, scale = gru.normalization_stats(np.array([[1.0, 2, 3], [1.0, 4, 3]]))
    np.testing.assert_array_equal(scale, [1.0, 1.0, 1.0])
    np.testing.assert_array_equal(mean, [1.0, 3.0, 3.0])


def test_train_config_validation():
    with pytest.raises(ValueError, match="learning_rate must be > 0"):
        gru.TrainConfig(learning_rate=-1)
    with pytest.raises(ValueError):
        gru.TrainConfig(patience=10, max_epochs=10)


def tiny_cfg(**kw):
    base = dict(num_layers=1, hidden=8, max_epochs=60, patience=10, restarts=2, batch_size=16)
    base.update(kw)
    return gru.TrainConfig(**base)


def sine_series(n=300):
    t = np.arange(n)
    return DisturbanceSeries(np.stack([np.sin(t / 20), np.cos(t / 30), 0.5 * np.sin(t / 10)], 1) * 1e-4)


def test_training_is_deterministic_and_selects_lowest_final_loss():
    a, log_a = gru.train(sine_series(), tiny_cfg(seed=7))
    b, log_b = gru.train(sine_series(), tiny_cfg(seed=7))
    assert gru.model_to_bytes(a) == gru.model_to_bytes(b)
    finals = [r.final_loss for r in log_a.restarts]
    assert log_a.selected == int(np.argmin(finals))
    assert log_a.epochs_run == len(log_a.restarts[log_a.selected].epoch_losses)


def test_training_reduces_loss_and_predicts():
    series = sine_series()
    net, log = gru.train(series, tiny_cfg(max_epochs=300, patience=50, restarts=1, batches_per_epoch=0))
    assert log.epoch_losses[-1] < 0.2 * log.epoch_losses[0]
    pred = gru.predict_next(net, series.samples[100:105])
    assert np.abs(pred - series.samples[105]).max() < 3e-5


def test_train_rejects_short_series():
    with pytest.raises(InsufficientData):
        gru.train(np.zeros((5, 3)), tiny_cfg())


def test_predict_series_rollout_shape():
    net = small_net()
    out = gru.predict_series(net, np.zeros((5, 3)), 12, dt=1.0, t0=100.0)
    assert out.samples.shape == (12, 3) and out.t0 == 100.0 and out.kind == "virtual"
    # rollout step 1 equals the one-step prediction
    np.testing.assert_allclose(out.samples[0], gru.predict_next(net, np.zeros((5, 3))), atol=1e-15)


def test_model_round_trip(tmp_path):
    net = small_net(layers=2)
    net.mean, net.scale = np.array([1.0, 2, 3]), np.array([0.5, 0.25, 2])
    path = tmp_path / "m.bin"
    gru.save_model(net, path)
    back = gru.load_model(path)
    for p, q in zip(net.params(), back.params()):
        np.testing.assert_array_equal(p, q)
    np.testing.assert_array_equal(back.scale, net.scale)
    assert gru.model_to_bytes(back) == path.read_bytes()


def test_model_format_errors():
    data = gru.model_to_bytes(small_net())
    with pytest.raises(ModelFormatError):
        gru.model_from_bytes(b"NOPE" + data[4:])
    with pytest.raises(ModelFormatError):
        gru.model_from_bytes(data[:-8])
    with pytest.raises(ModelFormatError):
        gru.model_from_bytes(data[:10])
