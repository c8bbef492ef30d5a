import numpy as np
import pytest

from hampinn import nn

WIDTHS = nn.DEFAULT_WIDTHS


def random_model(rng, widths=WIDTHS):
    """Default init plus a random (nonzero) output layer."""
    model = nn.init_model(widths, int(rng.integers(2**31)))
    model.weights[-1] = rng.uniform(-0.5, 0.5, size=model.weights[-1].shape)
    model.biases[-1] = rng.uniform(-0.5, 0.5, size=model.biases[-1].shape)
    return model


def central_fd(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2 * h)


def test_zero_output_layer_gives_zero():
    model = nn.init_model(WIDTHS, 0)
    t = np.linspace(0, 1, 11)
    np.testing.assert_array_equal(nn.forward(model, t), np.zeros((11, 15)))
    _, dy = nn.forward_with_time_derivative(model, t)
    np.testing.assert_array_equal(dy, np.zeros((11, 15)))


def test_single_hidden_unit_closed_form():
    w, b, a, c = 1.3, -0.4, 0.7, 0.2
    model = nn.Network([np.array([[w]]), np.array([[a]])], [np.array([b]), np.array([c])])
    t = np.array([0.0, 0.3, 0.9])
    y, dy = nn.forward_with_time_derivative(model, t)
    np.testing.assert_allclose(y[:, 0], a * np.tanh(w * t + b) + c, atol=1e-14, rtol=0)
    np.testing.assert_allclose(dy[:, 0], a * w * (1 - np.tanh(w * t + b) ** 2), atol=1e-12, rtol=0)


def test_batched_equals_pointwise():
    model = random_model(np.random.default_rng(0))
    t = np.linspace(0, 1, 9)
    batch = nn.forward(model, t)
    for i, ti in enumerate(t):
        np.testing.assert_allclose(nn.forward(model, ti)[0], batch[i], rtol=1e-14, atol=1e-15)


def test_time_derivative_matches_finite_differences():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        model = random_model(rng)
        t = rng.uniform(0, 1, 100)
        _, dy = nn.forward_with_time_derivative(model, t)
        fd = central_fd(lambda s: nn.forward(model, s), t)
        rel = np.linalg.norm(dy - fd, axis=1) / (np.linalg.norm(dy, axis=1) + 1e-8)
        worst = max(worst, rel.max())
    assert worst < 1e-6


def test_init_deterministic():
    a, b = nn.init_model(WIDTHS, 42), nn.init_model(WIDTHS, 42)
    np.testing.assert_array_equal(a.flatten(), b.flatten())
    assert not np.array_equal(a.flatten(), nn.init_model(WIDTHS, 43).flatten())


def test_init_variance():
    model = nn.init_model((1, 100, 100, 15), 0)
    W = model.weights[1]
    assert W.size == 10_000
    assert np.var(W) == pytest.approx(1 / (3 * 100), rel=0.05)
    assert np.max(np.abs(W)) <= 0.1


def test_init_rejects_bad_widths():
    with pytest.raises(ValueError):
        nn.init_model((2, 8, 15))
    with pytest.raises(ValueError):
        nn.init_model((1,))


def test_flatten_roundtrip():
    model = random_model(np.random.default_rng(2))
    theta = model.flatten()
    assert theta.size == model.n_params
    np.testing.assert_array_equal(model.unflatten(theta).flatten(), theta)


def test_bias_gradient_of_quadratic_on_zero_network():
    model = nn.init_model(WIDTHS, 3)
    y0 = np.random.default_rng(3).normal(size=(1, 15))
    y, _, tape = nn.forward_with_time_derivative(model, [0.4], record=True)
    grads = nn.backward(tape, y - y0)  # d/dy of 0.5 |y - y0|^2
    np.testing.assert_array_equal(grads.biases[-1], -y0[0])


def test_gradient_zero_at_minimum():
    rng = np.random.default_rng(4)
    model = random_model(rng)
    t = rng.uniform(0, 1, 7)
    target = nn.forward(model, t)
    y, _, tape = nn.forward_with_time_derivative(model, t, record=True)
    grads = nn.backward(tape, y - target)
    assert np.max(np.abs(grads.flatten())) < 1e-8


def test_backward_matches_finite_differences_with_tangent_loss():
    # loss = sum(a * y) + sum(b * dy^2) exercises both adjoint channels
    rng = np.random.default_rng(5)
    model = random_model(rng, (1, 6, 5, 3))
    t = rng.uniform(0, 1, 4)
    a = rng.normal(size=(4, 3))
    b = rng.normal(size=(4, 3))

    def loss(theta):
        y, dy = nn.forward_with_time_derivative(model.unflatten(theta), t)
        return np.sum(a * y) + np.sum(b * dy ** 2)

    y, dy, tape = nn.forward_with_time_derivative(model, t, record=True)
    grad = nn.backward(tape, a, 2 * b * dy).flatten()
    theta = model.flatten()
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = 1e-5
        fd = (loss(theta + e) - loss(theta - e)) / 2e-5
        assert abs(grad[k] - fd) / (abs(grad[k]) + 1e-8) < 1e-5


def test_float32_model_runs_in_float32():
    model = nn.init_model(WIDTHS, 0, dtype=np.float32)
    y, dy = nn.forward_with_time_derivative(model, np.linspace(0, 1, 3))
    assert y.dtype == np.float32 and dy.dtype == np.float32


def test_checkpoint_roundtrip(tmp_path):
    model = random_model(np.random.default_rng(6))
    path = tmp_path / "net.json"
    nn.save_checkpoint(model, path)
    loaded = nn.load_checkpoint(path)
    assert loaded.widths == model.widths
    np.testing.assert_array_equal(loaded.flatten(), model.flatten())


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "other", "version": 1}')
    with pytest.raises(ValueError):
        nn.load_checkpoint(path)
