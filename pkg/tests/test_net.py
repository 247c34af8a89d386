import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from basinprobe.errors import NumericError, ShapeError
from basinprobe.net import (
    Network, backward, forward, input_gradients, loss_value, param_jacobian, predict_classes,
)


def one_unit(a=1.0, b=1.0, c=0.0):
    # layout per layer: weights then bias
    return Network((1, 1, 1), "relu", [b, c, a, 0.0])


def test_one_unit_relu_outputs():
    net = one_unit()
    assert forward(net, [[2.0]])[0, 0] == 2.0
    assert forward(net, [[-1.0]])[0, 0] == 0.0


def test_zero_params_give_zero_output(rng):
    net = Network((4, 5, 3), "tanh")
    assert np.all(forward(net, rng.standard_normal((7, 4))) == 0.0)


def test_hand_gradient_one_unit():
    net = one_unit()
    g = backward(net, [[1.0]], [0.0], "least_squares")
    assert g.loss == 1.0
    # d loss / d a = 2 * relu(1) * residual
    assert g.grad_params[2] == pytest.approx(2.0)


def test_interpolating_solution_has_zero_gradient(rng):
    net = Network((3, 4, 1), "tanh", rng.standard_normal(21))
    X = rng.standard_normal((6, 3))
    y = forward(net, X)[:, 0]
    assert np.all(backward(net, X, y, "least_squares").grad_params == 0.0)


def test_param_count_and_roundtrip(rng):
    net = Network((2, 3, 1))
    assert net.num_params == 13
    v = rng.standard_normal(13)
    assert np.array_equal(net.flatten(net.unflatten(v)), v)
    for w, b in net.unflatten(np.zeros(13)):
        assert not w.any() and not b.any()
    with pytest.raises(ShapeError):
        net.unflatten(np.zeros(12))


def test_shape_errors(rng):
    net = Network((3, 2, 1))
    with pytest.raises(ShapeError):
        forward(net, rng.standard_normal((4, 2)))
    with pytest.raises(ShapeError):
        Network((3,))


def test_nonfinite_activation_reports_sample():
    net = Network((1, 1, 1), "relu", [1e300, 0.0, 1e300, 0.0])
    with pytest.raises(NumericError, match="sample 1"):
        backward(net, [[0.0], [1e300]], [0.0, 0.0], "least_squares")


def _fd_grad(net, X, y, loss, theta, h=1e-4):
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (loss_value(forward(net, X, theta + e), y, loss) - loss_value(forward(net, X, theta - e), y, loss)) / (2 * h)
    return g


def _away_from_kinks(net, X, theta):
    from basinprobe.net import _forward_cache

    _, pre, _ = _forward_cache(net, X, theta)
    return all(np.min(np.abs(z)) >= 1e-3 for z in pre[:-1])


ARCHS = [dims for depth in (1, 2, 3) for dims in [
    (3,) + (w,) * depth + (o,) for w in (1, 4, 8) for o in (1, 3)
]]


@pytest.mark.parametrize("act,loss", list(itertools.product(("relu", "tanh", "sigmoid"),
                                                             ("least_squares", "softmax_cross_entropy"))))
def test_gradient_matrix(act, loss):
    rng = np.random.default_rng(7)
    worst = 0.0
    for dims in ARCHS:
        if loss == "softmax_cross_entropy" and dims[-1] == 1:
            continue
        net = Network(dims, act)
        for _ in range(50):
            theta = rng.standard_normal(net.num_params)
            X = rng.standard_normal((5, dims[0]))
            if act != "relu" or _away_from_kinks(net, X, theta):
                break
        y = rng.integers(0, dims[-1], 5) if loss != "least_squares" else rng.standard_normal((5, dims[-1]))
        g = backward(net, X, y, loss, params=theta).grad_params
        fd = _fd_grad(net, X, y, loss, theta)
        worst = max(worst, np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-8))
    assert worst <= 1e-5


def test_input_gradients_match_fd(rng):
    net = Network((3, 6, 1), "tanh", rng.standard_normal(31))
    X = rng.standard_normal((4, 3))
    G = input_gradients(net, X)
    h = 1e-6
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (forward(net, X + e)[:, 0] - forward(net, X - e)[:, 0]) / (2 * h)
        np.testing.assert_allclose(G[:, j], fd, rtol=1e-6, atol=1e-9)


def test_param_jacobian_rows_are_output_gradients(rng):
    net = Network((2, 3, 1), "sigmoid", rng.standard_normal(13))
    X = rng.standard_normal((4, 2))
    J = param_jacobian(net, X)
    # sum of rows weighted by 2r/N is the least-squares gradient
    r = forward(net, X)[:, 0]
    g = backward(net, X, np.zeros(4), "least_squares").grad_params
    np.testing.assert_allclose((2 / 4) * r @ J, g, rtol=1e-12, atol=1e-14)


def test_gradient_bytes_are_deterministic(rng):
    net = Network((4, 5, 3), "relu", rng.standard_normal(43))
    X = rng.standard_normal((9, 4))
    y = rng.integers(0, 3, 9)
    a = backward(net, X, y, "softmax_cross_entropy").grad_params.tobytes()
    b = backward(net, X, y, "softmax_cross_entropy").grad_params.tobytes()
    assert a == b


def test_grad_inputs_only_when_requested(rng):
    net = Network((2, 3, 1), "relu", rng.standard_normal(13))
    X = rng.standard_normal((3, 2))
    assert backward(net, X, np.zeros(3), "least_squares").grad_inputs is None
    assert backward(net, X, np.zeros(3), "least_squares", want_input_grads=True).grad_inputs.shape == (3, 2)


@given(t=st.sampled_from([0.5, 2.0, 10.0]), seed=st.integers(0, 2**16))
def test_node_scaling_leaves_relu_output_unchanged(t, seed):
    rng = np.random.default_rng(seed)
    net = Network((3, 5, 1), "relu", rng.standard_normal(26))
    (W, b), (a, c0) = net.unflatten()
    scaled = net.with_params(net.flatten([(t * W, t * b), (a / t, c0)]))
    X = rng.standard_normal((8, 3))
    f0, f1 = forward(net, X), forward(scaled, X)
    assert np.max(np.abs(f1 - f0)) <= 1e-12 * max(1.0, np.max(np.abs(f0)))


def test_predict_classes(rng):
    net = Network((2, 3), "relu", rng.standard_normal(9))
    X = rng.standard_normal((5, 2))
    assert np.array_equal(predict_classes(net, X), np.argmax(forward(net, X), axis=1))
