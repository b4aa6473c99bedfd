import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carsm.approx import Adam, Mlp
from carsm.verify import finite_difference, relative_error


def naive_forward(net, x):
    """Loop-based reference: one neuron at a time."""
    h = list(x)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        out = []
        for r in range(w.shape[0]):
            z = b[r]
            for c in range(w.shape[1]):
                z += w[r, c] * h[c]
            out.append(np.tanh(z) if i < len(net.weights) - 1 else z)
        h = out
    return np.array(h)


def test_param_count_matches_shape_arithmetic():
    net = Mlp.init([4, 64, 64, 2], seed=0)
    assert net.n_params == 320 + 4160 + 130 == 4610


def test_init_deterministic_and_zero_bias():
    a, b = Mlp.init([3, 5, 2], seed=7), Mlp.init([3, 5, 2], seed=7)
    np.testing.assert_array_equal(a.get_params(), b.get_params())
    assert all(np.all(bias == 0) for bias in a.biases)


def test_init_scale_bounded_by_fan_in():
    net = Mlp.init([16, 9, 1], seed=1)
    assert np.abs(net.weights[0]).max() <= 1 / 4
    assert np.abs(net.weights[1]).max() <= 1 / 3


@pytest.mark.parametrize("sizes", [[3], [3, 0, 2], []])
def test_invalid_layer_sizes(sizes):
    with pytest.raises(ValueError):
        Mlp.init(sizes)


def test_zero_network_outputs_zero():
    net = Mlp.init([3, 4, 2], seed=0)
    net.set_params(np.zeros(net.n_params))
    np.testing.assert_array_equal(net.forward(np.array([1.0, -2.0, 3.0])), np.zeros(2))


def test_identity_linear_layer():
    net = Mlp([3, 3], [np.eye(3)], [np.zeros(3)])
    x = np.array([0.3, -1.2, 5.0])
    np.testing.assert_array_equal(net.forward(x), x)


def test_forward_matches_naive_reference(rng):
    net = Mlp.init([5, 7, 6, 3], seed=3)
    net.set_params(rng.normal(size=net.n_params))
    for _ in range(5):
        x = rng.normal(size=5)
        np.testing.assert_allclose(net.forward(x), naive_forward(net, x), atol=1e-12, rtol=0)


def test_forward_batch_matches_rows(rng):
    net = Mlp.init([4, 8, 2], seed=0)
    x = rng.normal(size=(6, 4))
    batch = net.forward(x)
    for i in range(6):
        np.testing.assert_allclose(batch[i], net.forward(x[i]), rtol=0, atol=1e-13)


def test_forward_shape_error():
    net = Mlp.init([4, 8, 2], seed=0)
    with pytest.raises(ValueError):
        net.forward(np.zeros(3))


def test_forward_is_pure(rng):
    net = Mlp.init([4, 8, 2], seed=0)
    x = rng.normal(size=4)
    before = net.get_params().copy()
    np.testing.assert_array_equal(net.forward(x), net.forward(x))
    np.testing.assert_array_equal(net.get_params(), before)


def test_backward_zero_output_grad():
    net = Mlp.init([4, 8, 2], seed=0)
    g, gx = net.backward(np.ones(4), np.zeros(2))
    assert not g.any() and not gx.any()


def test_backward_linear_closed_form():
    net = Mlp([1, 1], [np.array([[2.5]])], [np.array([0.7])])
    g, gx = net.backward(np.array([3.0]), np.array([1.0]))
    np.testing.assert_array_equal(g, [3.0, 1.0])   # d/dw = x, d/db = 1
    np.testing.assert_array_equal(gx, [2.5])


def test_backward_shape_error():
    net = Mlp.init([4, 8, 2], seed=0)
    with pytest.raises(ValueError):
        net.backward(np.zeros(4), np.zeros(3))


@pytest.mark.parametrize("sizes", [[3, 5, 2], [4, 16, 16, 6], [2, 1], [6, 3, 3, 3, 1]])
def test_backward_matches_central_differences(sizes, rng):
    net = Mlp.init(sizes, seed=len(sizes))
    x = rng.normal(size=(4, sizes[0]))
    w = rng.normal(size=(4, sizes[-1]))
    theta = net.get_params()

    def f(p):
        probe = net.copy()
        probe.set_params(p)
        return float(np.sum(w * probe.forward(x)))

    g, _ = net.backward(x, w)
    fd = finite_difference(f, theta, eps=1e-5)
    assert relative_error(g, fd) < 1e-4


def test_input_gradient_matches_central_differences(rng):
    net = Mlp.init([3, 7, 2], seed=2)
    x, w = rng.normal(size=3), rng.normal(size=2)
    _, gx = net.backward(x, w)
    fd = finite_difference(lambda z: float(w @ net.forward(z)), x, eps=1e-5)
    assert relative_error(gx, fd) < 1e-4


def test_jvp_matches_directional_difference(rng):
    net = Mlp.init([3, 7, 4], seed=2)
    x = rng.normal(size=(5, 3))
    v = rng.normal(size=net.n_params)
    theta, eps = net.get_params(), 1e-6
    plus, minus = net.copy(), net.copy()
    plus.set_params(theta + eps * v)
    minus.set_params(theta - eps * v)
    fd = (plus.forward(x) - minus.forward(x)) / (2 * eps)
    np.testing.assert_allclose(net.jvp(x, v), fd, rtol=1e-6, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(sizes=st.lists(st.integers(1, 6), min_size=2, max_size=4), seed=st.integers(0, 1000))
def test_flatten_roundtrip_is_lossless(sizes, seed):
    net = Mlp.init(sizes, seed=seed)
    theta = np.random.default_rng(seed).normal(size=net.n_params)
    net.set_params(theta)
    np.testing.assert_array_equal(net.get_params(), theta)


def test_set_params_length_error():
    net = Mlp.init([2, 2], seed=0)
    with pytest.raises(ValueError):
        net.set_params(np.zeros(net.n_params + 1))


def test_adam_zero_gradient_leaves_params():
    opt = Adam(0.1, 3)
    p = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(opt.step(p, np.zeros(3)), p)
    assert opt.t == 1


def test_adam_constant_gradient_moves_monotonically():
    opt = Adam(0.01, 2)
    p = np.zeros(2)
    g = np.array([1.0, -3.0])
    history = [p]
    for _ in range(50):
        p = opt.step(p, g)
        history.append(p)
    d = np.diff(np.array(history), axis=0)
    assert np.all(d[:, 0] < 0) and np.all(d[:, 1] > 0)


def test_adam_first_step_magnitude_is_learning_rate():
    lr = 0.003
    opt = Adam(lr, 4)
    g = np.array([0.5, -2.0, 10.0, -1e-3])
    step = opt.step(np.zeros(4), g)
    # first bias-corrected step is -lr * g / (|g| + eps)
    expected = -lr * g / (np.abs(g) + opt.eps)
    np.testing.assert_allclose(step, expected, rtol=1e-12)
    assert np.all(np.abs(np.abs(step) - lr) <= 0.01 * lr)


def test_adam_length_mismatch():
    with pytest.raises(ValueError):
        Adam(0.1, 3).step(np.zeros(3), np.zeros(2))
