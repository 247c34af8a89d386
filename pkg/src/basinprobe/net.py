"""Dense feedforward networks over a flat float64 parameter vector.

Every layer computes ``X @ W + b`` with ``W`` stored row-major as
``(fan_in, fan_out)`` inside the flat vector, followed by its bias. Hidden
layers apply the activation; the output layer is always linear.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NumericError, ShapeError


class Activation(str, enum.Enum):
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"


class LossKind(str, enum.Enum):
    LEAST_SQUARES = "least_squares"
    SOFTMAX_CROSS_ENTROPY = "softmax_cross_entropy"


def activate(kind, z):
    kind = Activation(kind)
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    if kind is Activation.TANH:
        return np.tanh(z)
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def activate_prime(kind, z):
    """First derivative; the ReLU subgradient at exactly 0 is 0."""
    kind = Activation(kind)
    if kind is Activation.RELU:
        return (z > 0).astype(np.float64)
    if kind is Activation.TANH:
        t = np.tanh(z)
        return 1.0 - t * t
    s = 0.5 * (1.0 + np.tanh(0.5 * z))
    return s * (1.0 - s)


def activate_second(kind, z):
    """Second derivative; ReLU's is taken as 0 everywhere."""
    kind = Activation(kind)
    if kind is Activation.RELU:
        return np.zeros_like(z, dtype=np.float64)
    if kind is Activation.TANH:
        t = np.tanh(z)
        return -2.0 * t * (1.0 - t * t)
    s = 0.5 * (1.0 + np.tanh(0.5 * z))
    return s * (1.0 - s) * (1.0 - 2.0 * s)


@dataclass(frozen=True)
class LayerSlot:
    fan_in: int
    fan_out: int
    weight: slice
    bias: slice


def build_layout(layer_dims):
    slots = []
    offset = 0
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        w = slice(offset, offset + fan_in * fan_out)
        offset = w.stop
        b = slice(offset, offset + fan_out)
        offset = b.stop
        slots.append(LayerSlot(fan_in, fan_out, w, b))
    return tuple(slots), offset


@dataclass(frozen=True)
class Network:
    """Architecture plus one parameter vector.

    The instance is treated as immutable; use :meth:`with_params` to get a
    network sharing the architecture but holding different parameters.
    """

    layer_dims: tuple
    activation: Activation = Activation.RELU
    params: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ShapeError(f"layer_dims must hold >= 2 positive sizes, got {dims}")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "activation", Activation(self.activation))
        layout, size = build_layout(dims)
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "num_params", size)
        if self.params is None:
            params = np.zeros(size)
        else:
            params = np.array(self.params, dtype=np.float64, copy=True).reshape(-1)
            if params.size != size:
                raise ShapeError(f"expected {size} parameters for {dims}, got {params.size}")
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def output_dim(self):
        return self.layer_dims[-1]

    def with_params(self, params) -> "Network":
        return Network(self.layer_dims, self.activation, params)

    def unflatten(self, params=None):
        """Split a flat vector into ``[(W, b), ...]`` views."""
        params = self.params if params is None else check_param_vector(self, params)
        return [
            (params[s.weight].reshape(s.fan_in, s.fan_out), params[s.bias])
            for s in self.layout
        ]

    def flatten(self, layers) -> np.ndarray:
        if len(layers) != len(self.layout):
            raise ShapeError(f"expected {len(self.layout)} layers, got {len(layers)}")
        out = np.empty(self.num_params)
        for i, (slot, (w, b)) in enumerate(zip(self.layout, layers)):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64).reshape(-1)
            if w.shape != (slot.fan_in, slot.fan_out) or b.shape != (slot.fan_out,):
                raise ShapeError(
                    f"layer {i}: expected W {(slot.fan_in, slot.fan_out)} and b "
                    f"({slot.fan_out},), got {w.shape} and {b.shape}"
                )
            out[slot.weight] = w.reshape(-1)
            out[slot.bias] = b
        return out


def check_param_vector(net, params):
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.size != net.num_params:
        raise ShapeError(f"expected parameter vector of length {net.num_params}, got shape {params.shape}")
    return params


def _check_batch(net, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, net.input_dim) if net.input_dim > 1 else X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ShapeError(f"layer 0 expects inputs with {net.input_dim} columns, got shape {X.shape}")
    return X


def _forward_cache(net, X, params):
    layers = net.unflatten(params)
    pre, post = [], [X]
    a = X
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = a @ w + b
        pre.append(z)
        a = z if i == last else activate(net.activation, z)
        post.append(a)
    return layers, pre, post


def _raise_nonfinite(out):
    bad = ~np.isfinite(out).all(axis=1)
    if bad.any():
        raise NumericError(f"non-finite activation at sample {int(np.argmax(bad))}")


def forward(net: Network, X, params=None) -> np.ndarray:
    """Network outputs, one row per input row."""
    X = _check_batch(net, X)
    _, _, post = _forward_cache(net, X, params)
    return post[-1]


def loss_value(out, targets, loss):
    """Mean loss over rows of ``out``."""
    loss = LossKind(loss)
    n = out.shape[0]
    if loss is LossKind.LEAST_SQUARES:
        r = out - np.asarray(targets, dtype=np.float64).reshape(out.shape)
        return float(np.sum(r * r) / n)
    z = out - out.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    y = np.asarray(targets, dtype=np.int64)
    return float(np.sum(lse - z[np.arange(n), y]) / n)


def loss_output_grad(out, targets, loss):
    """d(mean loss)/d(out) together with the loss value."""
    loss = LossKind(loss)
    n = out.shape[0]
    if loss is LossKind.LEAST_SQUARES:
        r = out - np.asarray(targets, dtype=np.float64).reshape(out.shape)
        return float(np.sum(r * r) / n), (2.0 / n) * r
    y = np.asarray(targets, dtype=np.int64)
    if y.shape != (n,) or (n and (y.min() < 0 or y.max() >= out.shape[1])):
        raise ShapeError(f"cross-entropy targets must be {n} class indices below {out.shape[1]}")
    z = out - out.max(axis=1, keepdims=True)
    ez = np.exp(z)
    total = ez.sum(axis=1)
    value = float(np.sum(np.log(total) - z[np.arange(n), y]) / n)
    g = ez / total[:, None]
    g[np.arange(n), y] -= 1.0
    return value, g / n


@dataclass
class GradientBundle:
    loss: float
    grad_params: np.ndarray
    grad_inputs: Optional[np.ndarray] = None


def _backprop(net, layers, pre, post, delta):
    """Push ``delta`` (d/d output) back; returns flat grad and d/d input."""
    grad = np.empty(net.num_params)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        slot = net.layout[i]
        grad[slot.weight] = (post[i].T @ delta).reshape(-1)
        grad[slot.bias] = delta.sum(axis=0)
        delta = delta @ w.T
        if i > 0:
            delta = delta * activate_prime(net.activation, pre[i - 1])
    return grad, delta


def backward(net: Network, X, targets, loss=LossKind.LEAST_SQUARES, want_input_grads=False,
             params=None) -> GradientBundle:
    """Loss and its gradient w.r.t. every parameter.

    With ``want_input_grads`` the bundle also carries ``d f / d x`` for each
    sample (scalar-output networks only).
    """
    X = _check_batch(net, X)
    layers, pre, post = _forward_cache(net, X, params)
    _raise_nonfinite(post[-1])
    value, delta = loss_output_grad(post[-1], targets, loss)
    grad, _ = _backprop(net, layers, pre, post, delta)
    bundle = GradientBundle(value, grad)
    if want_input_grads:
        if net.output_dim != 1:
            raise ShapeError("input gradients are defined for scalar-output networks only")
        _, dx = _backprop(net, layers, pre, post, np.ones((X.shape[0], 1)))
        bundle.grad_inputs = dx
    return bundle


def loss_and_grad(net, params, X, targets, loss):
    """Functional form used by the Hessian machinery."""
    b = backward(net, X, targets, loss, params=params)
    return b.loss, b.grad_params


def input_gradients(net: Network, X, params=None) -> np.ndarray:
    """Per-sample ``d f / d x`` for a scalar-output network, shape (N, d)."""
    X = _check_batch(net, X)
    if net.output_dim != 1:
        raise ShapeError("input gradients are defined for scalar-output networks only")
    layers, pre, post = _forward_cache(net, X, params)
    _, dx = _backprop(net, layers, pre, post, np.ones((X.shape[0], 1)))
    return dx


def param_jacobian(net: Network, X, params=None) -> np.ndarray:
    """Per-sample ``d f / d theta`` for a scalar-output network, shape (N, P)."""
    X = _check_batch(net, X)
    if net.output_dim != 1:
        raise ShapeError("parameter Jacobian is implemented for scalar-output networks only")
    layers, pre, post = _forward_cache(net, X, params)
    n = X.shape[0]
    jac = np.empty((n, net.num_params))
    delta = np.ones((n, 1))
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        slot = net.layout[i]
        jac[:, slot.weight] = (post[i][:, :, None] * delta[:, None, :]).reshape(n, -1)
        jac[:, slot.bias] = delta
        delta = delta @ w.T
        if i > 0:
            delta = delta * activate_prime(net.activation, pre[i - 1])
    return jac


def predict_classes(net, X, params=None):
    return np.argmax(forward(net, X, params), axis=1)
