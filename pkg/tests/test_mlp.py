import math

import numpy as np
import pytest

from stratdetect import mlp


def numeric_grad(model, X, y, eps=1e-6):
    out = {}
    for k in model.param_names():
        p = model.params[k]
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            up = mlp.loss_and_grad(model, X, y)[0]
            p[idx] = old - eps
            down = mlp.loss_and_grad(model, X, y)[0]
            p[idx] = old
            g[idx] = (up - down) / (2 * eps)
        out[k] = g
    return out


def max_rel_error(model, X, y):
    _, grads = mlp.loss_and_grad(model, X, y)
    num = numeric_grad(model, X, y)
    worst = 0.0
    for k in grads:
        denom = np.maximum(np.abs(grads[k]) + np.abs(num[k]), 1e-8)
        worst = max(worst, float(np.max(np.abs(grads[k] - num[k]) / denom)))
    return worst


@pytest.mark.parametrize("case", range(20))
def test_backprop_matches_finite_differences(case):
    rng = np.random.default_rng(case)
    d = int(rng.integers(1, 11))
    hidden = [0, 4, 8][case % 3]
    model = mlp.init(d, hidden, seed=case)
    for k in model.params:  # nonzero biases exercise the bias gradients
        model.params[k] += rng.normal(0, 0.1, model.params[k].shape)
    X = rng.normal(size=(7, d))
    y = rng.integers(0, 6, size=7)
    assert max_rel_error(model, X, y) < 1e-4


def test_glorot_bounds_and_zero_bias():
    model = mlp.init(120, 40, seed=0)
    lim = math.sqrt(6 / 160)
    assert mlp.glorot_limit(120, 40) == pytest.approx(0.19365, abs=1e-5)
    assert np.all(np.abs(model.params["W1"]) < lim)
    assert np.abs(model.params["W1"]).max() > 0.9 * lim
    assert not model.params["b1"].any() and not model.params["b2"].any()
    assert model.params["W2"].shape == (40, 6)


def test_init_deterministic_and_perceptron_shape():
    a, b = mlp.init(9, 10, seed=5), mlp.init(9, 10, seed=5)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])
    p = mlp.init(9, 0, seed=5)
    assert set(p.params) == {"W2", "b2"} and p.params["W2"].shape == (9, 6)


def test_zero_model_is_uniform_and_loss_ln6():
    model = mlp.init(4, 3, seed=0)
    for k in model.params:
        model.params[k][:] = 0.0
    X = np.random.default_rng(0).normal(size=(5, 4))
    assert np.allclose(mlp.forward(model, X), 1 / 6, atol=1e-15)
    loss, _ = mlp.loss_and_grad(model, X, np.arange(5) % 6)
    assert abs(loss - math.log(6)) < 1e-9


def test_softmax_rows_and_shift_invariance():
    rng = np.random.default_rng(1)
    logits = rng.normal(0, 30, size=(50, 6))
    p = mlp.softmax(logits)
    assert np.all(np.abs(p.sum(axis=1) - 1) < 1e-9)
    assert np.allclose(mlp.softmax(logits + 123.4), p, atol=1e-15)


def test_forward_matches_plain_reimplementation():
    rng = np.random.default_rng(2)
    model = mlp.init(5, 4, seed=3)
    x = rng.normal(size=5)
    W1, b1, W2, b2 = (model.params[k] for k in ("W1", "b1", "W2", "b2"))
    h = [max(0.0, sum(x[i] * W1[i, j] for i in range(5)) + b1[j]) for j in range(4)]
    z = [sum(h[j] * W2[j, c] for j in range(4)) + b2[c] for c in range(6)]
    e = [math.exp(v - max(z)) for v in z]
    expected = [v / sum(e) for v in e]
    assert np.allclose(mlp.forward(model, x), expected, atol=1e-12)


def test_forward_shape_error():
    with pytest.raises(ValueError):
        mlp.forward(mlp.init(3, 0, seed=0), np.zeros(4))


def test_probability_floor_keeps_loss_finite():
    model = mlp.init(1, 0, seed=0)
    model.params["W2"][:] = 0.0
    model.params["b2"][:] = [1000, 0, 0, 0, 0, 0]
    loss, _ = mlp.loss_and_grad(model, np.zeros((1, 1)), np.array([1]))
    assert loss == pytest.approx(-math.log(1e-12))


def _scalar_adam(w, grads, lr=0.001, b1=0.9, b2=0.999, eps=1e-7):
    m = v = 0.0
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return w


def _one_weight_model(w):
    model = mlp.init(1, 0, seed=0, output_dim=1)
    model.params["W2"][:] = w
    model.params["b2"][:] = 0.0
    return model


def test_adam_single_step_hand_trace():
    model = _one_weight_model(1.0)
    state = mlp.AdamState()
    mlp.adam_step(model, {"W2": np.array([[0.5]]), "b2": np.array([0.0])}, state)
    # m_hat = 0.5, v_hat = 0.25: step = lr * 0.5 / (0.5 + 1e-7)
    expected = 1.0 - 0.001 * 0.5 / (0.5 + 1e-7)
    assert abs(model.params["W2"][0, 0] - expected) < 1e-10
    assert abs(model.params["W2"][0, 0] - 0.999000) < 1e-6
    assert model.params["b2"][0] == 0.0 and state.t == 1


def test_adam_two_steps_match_scalar_trace():
    model = _one_weight_model(0.3)
    state = mlp.AdamState()
    for g in (0.5, -0.2):
        mlp.adam_step(model, {"W2": np.array([[g]]), "b2": np.array([0.0])}, state)
    assert abs(model.params["W2"][0, 0] - _scalar_adam(0.3, [0.5, -0.2])) < 1e-10


def test_training_reduces_loss_and_learns_constant_label():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 5))
    y = np.full(200, 2)
    model = mlp.init(5, 10, seed=1)
    before = mlp.loss_and_grad(model, X, y)[0]
    mlp.train(model, X, y, epochs=5, batch_size=32)
    after5 = mlp.loss_and_grad(model, X, y)[0]
    assert after5 < before
    mlp.train(model, X, y, epochs=45, batch_size=32)
    assert mlp.loss_and_grad(model, X, y)[0] < after5
    assert mlp.accuracy(model, X, y) == 1.0


def test_argmax_ties_go_to_lowest_index():
    model = mlp.init(2, 0, seed=0)
    for k in model.params:
        model.params[k][:] = 0.0
    assert mlp.predict(model, np.zeros(2)).tolist() == [0]


def test_checkpoint_roundtrip(tmp_path):
    model = mlp.init(7, 4, seed=9)
    mlp.save_checkpoint(tmp_path / "m.bin", model, "abc")
    back, header = mlp.load_checkpoint(tmp_path / "m.bin")
    assert header["schema_hash"] == "abc"
    for k in model.params:
        assert np.array_equal(back.params[k], model.params[k])
