"""Small float64 neural-network core with hand-written backward passes.

Only the three layer kinds a genome can encode are provided: ``Dense``,
``Conv2d`` and ``Deconv2d`` (transposed convolution), each followed by an
optional elementwise activation. Tensors are plain ``numpy.ndarray`` objects
with a leading batch axis.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ConfigurationError, TrainingDivergenceError, UsageError

ACTIVATIONS = ("ReLU", "LeakyReLU", "ELU", "Sigmoid", "Tanh")
LAYER_KINDS = ("Dense", "Conv2d", "Deconv2d")

LEAKY_SLOPE = 0.2
ELU_ALPHA = 1.0

# Fixed geometry: every Conv2d halves and every Deconv2d doubles spatial size.
KERNEL_SIZE = 3
STRIDE = 2
PADDING = 1
OUTPUT_PADDING = 1


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def apply_activation(kind, x):
    """Apply activation ``kind`` elementwise; ``None`` is the identity."""
    if kind is None:
        return x
    if kind == "ReLU":
        return np.maximum(x, 0.0)
    if kind == "LeakyReLU":
        return np.where(x > 0, x, LEAKY_SLOPE * x)
    if kind == "ELU":
        return np.where(x > 0, x, ELU_ALPHA * np.expm1(np.minimum(x, 0.0)))
    if kind == "Sigmoid":
        return _sigmoid(x)
    if kind == "Tanh":
        return np.tanh(x)
    raise ConfigurationError(f"unknown activation {kind!r}")


def activation_derivative(kind, pre, out):
    """Derivative of the activation at pre-activation ``pre`` (``out`` is its value)."""
    if kind is None:
        return np.ones_like(pre)
    if kind == "ReLU":
        return (pre > 0).astype(pre.dtype)
    if kind == "LeakyReLU":
        return np.where(pre > 0, 1.0, LEAKY_SLOPE)
    if kind == "ELU":
        return np.where(pre > 0, 1.0, out + ELU_ALPHA)
    if kind == "Sigmoid":
        return out * (1.0 - out)
    if kind == "Tanh":
        return 1.0 - out * out
    raise ConfigurationError(f"unknown activation {kind!r}")


def conv_output_size(size, kernel=KERNEL_SIZE, stride=STRIDE, padding=PADDING):
    return (size + 2 * padding - kernel) // stride + 1


def deconv_output_size(size, kernel=KERNEL_SIZE, stride=STRIDE, padding=PADDING,
                       output_padding=OUTPUT_PADDING):
    return (size - 1) * stride - 2 * padding + kernel + output_padding


def _im2col(x, kernel, stride, padding, out_h, out_w):
    n, c = x.shape[:2]
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :out_h, :out_w]
    # (n, c, oh, ow, k, k) -> (n, c, k, k, oh, ow)
    cols = windows.transpose(0, 1, 4, 5, 2, 3)
    return cols.reshape(n, c * kernel * kernel, out_h * out_w)


def _col2im(cols, channels, height, width, kernel, stride, padding, out_h, out_w):
    n = cols.shape[0]
    cols = cols.reshape(n, channels, kernel, kernel, out_h, out_w)
    hp = max(height + 2 * padding, (out_h - 1) * stride + kernel)
    wp = max(width + 2 * padding, (out_w - 1) * stride + kernel)
    xp = np.zeros((n, channels, hp, wp), dtype=cols.dtype)
    for i in range(kernel):
        for j in range(kernel):
            xp[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += cols[:, :, i, j]
    return xp[:, :, padding:padding + height, padding:padding + width]


def _merge_batch(a):
    # (n, rows, p) -> (rows, n * p) so a batch-summed product is one matmul
    return a.transpose(1, 0, 2).reshape(a.shape[1], -1)


@dataclass
class AdamState:
    """Adam moments for one layer's parameter arrays."""

    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kwargs):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kwargs)


def adam_step(params, grads, state, learning_rate, layer_index=None):
    """Bias-corrected Adam update applied in place to ``params``.

    Raises :class:`TrainingDivergenceError` before touching anything if a
    gradient component is non-finite.
    """
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise UsageError("params, grads and Adam moments must have the same length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingDivergenceError(
                f"non-finite gradient in layer {layer_index}", layer_index=layer_index)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass
class LayerParams:
    """Parameters and hyper-parameters of one layer."""

    kind: str
    weights: np.ndarray
    bias: np.ndarray
    activation: str | None
    hyper: dict = field(default_factory=dict)


def init_params(kind, hyper, rng, activation=None):
    """Uniform fan-in initialisation, bound ``1/sqrt(fan_in)``, zero bias.

    ``hyper`` holds ``in_features``/``out_features`` for Dense and
    ``in_channels``/``out_channels`` for the convolutional kinds.
    """
    k = hyper.get("kernel", KERNEL_SIZE)
    if kind == "Dense":
        fan_in, out = hyper["in_features"], hyper["out_features"]
        shape = (out, fan_in)
    elif kind == "Conv2d":
        cin, out = hyper["in_channels"], hyper["out_channels"]
        fan_in = cin * k * k
        shape = (out, cin, k, k)
    elif kind == "Deconv2d":
        cin, out = hyper["in_channels"], hyper["out_channels"]
        fan_in = cin * k * k
        shape = (cin, out, k, k)
    else:
        raise ConfigurationError(f"unknown layer kind {kind!r}")
    if fan_in <= 0 or out <= 0:
        raise ConfigurationError(f"{kind} layer needs positive fan-in and width, got {hyper}")
    bound = 1.0 / np.sqrt(fan_in)
    weights = rng.uniform(-bound, bound, size=shape)
    return LayerParams(kind, weights, np.zeros(out), activation, dict(hyper))


class Layer:
    """One parameterised layer plus its Adam state and forward cache.

    ``in_shape``/``out_shape`` are per-sample shapes: ``(F,)`` for flat
    vectors, ``(C, H, W)`` for feature maps. A flat input to a
    convolutional layer is read as ``(F, 1, 1)``; a spatial input to a Dense
    layer is flattened.
    """

    def __init__(self, params, in_shape, tag=None, adam_options=None):
        self.params = params
        self.in_shape = tuple(in_shape)
        self.tag = tag
        self.out_shape = self._infer_out_shape()
        self.adam = AdamState.zeros_like([params.weights, params.bias], **(adam_options or {}))
        self.grads = None
        self._cache = None

    @property
    def kind(self):
        return self.params.kind

    def _infer_out_shape(self):
        p = self.params
        if p.kind == "Dense":
            return (p.weights.shape[0],)
        c, h, w = self._spatial_in_shape()
        k, s, pad = p.hyper.get("kernel", KERNEL_SIZE), p.hyper.get("stride", STRIDE), p.hyper.get("padding", PADDING)
        if p.kind == "Conv2d":
            return (p.weights.shape[0], conv_output_size(h, k, s, pad), conv_output_size(w, k, s, pad))
        op = p.hyper.get("output_padding", OUTPUT_PADDING)
        return (p.weights.shape[1], deconv_output_size(h, k, s, pad, op), deconv_output_size(w, k, s, pad, op))

    def _spatial_in_shape(self):
        if len(self.in_shape) == 3:
            return self.in_shape
        if len(self.in_shape) == 1:
            return (self.in_shape[0], 1, 1)
        raise ConfigurationError(f"cannot feed shape {self.in_shape} into {self.kind}")

    def forward(self, x):
        p = self.params
        n = x.shape[0]
        if p.kind == "Dense":
            xin = x.reshape(n, -1)
            pre = xin @ p.weights.T + p.bias
            ctx = xin
        elif p.kind == "Conv2d":
            c, h, w = self._spatial_in_shape()
            xin = x.reshape(n, c, h, w)
            _, oh, ow = self.out_shape
            k = p.weights.shape[-1]
            cols = _im2col(xin, k, p.hyper.get("stride", STRIDE), p.hyper.get("padding", PADDING), oh, ow)
            wmat = p.weights.reshape(p.weights.shape[0], -1)
            pre = (wmat @ cols).reshape(n, *self.out_shape) + p.bias[:, None, None]
            ctx = cols
        else:
            c, h, w = self._spatial_in_shape()
            xin = x.reshape(n, c, h * w)
            cout, oh, ow = self.out_shape
            k = p.weights.shape[-1]
            wmat = p.weights.reshape(c, -1)
            cols = wmat.T @ xin
            out = _col2im(cols, cout, oh, ow, k, p.hyper.get("stride", STRIDE),
                          p.hyper.get("padding", PADDING), h, w)
            pre = out + p.bias[:, None, None]
            ctx = xin
        out = apply_activation(p.activation, pre)
        self._cache = (x.shape, ctx, pre, out)
        return out

    def backward(self, grad_out, skip_activation=False):
        """Back-propagate ``grad_out``; stores parameter gradients in ``self.grads``.

        With ``skip_activation`` the incoming gradient is taken to be with
        respect to the pre-activation.
        """
        if self._cache is None:
            raise UsageError("backward called before forward")
        x_shape, ctx, pre, out = self._cache
        p = self.params
        n = x_shape[0]
        g = grad_out if skip_activation else grad_out * activation_derivative(p.activation, pre, out)
        if p.kind == "Dense":
            gw = g.T @ ctx
            gb = g.sum(axis=0)
            gx = g @ p.weights
        elif p.kind == "Conv2d":
            cout = p.weights.shape[0]
            gm = g.reshape(n, cout, -1)
            gw = (_merge_batch(gm) @ _merge_batch(ctx).T).reshape(p.weights.shape)
            gb = gm.sum(axis=(0, 2))
            wmat = p.weights.reshape(cout, -1)
            c, h, w = self._spatial_in_shape()
            _, oh, ow = self.out_shape
            k = p.weights.shape[-1]
            gx = _col2im(wmat.T @ gm, c, h, w, k, p.hyper.get("stride", STRIDE),
                         p.hyper.get("padding", PADDING), oh, ow)
        else:
            c, h, w = self._spatial_in_shape()
            k = p.weights.shape[-1]
            gcols = _im2col(g, k, p.hyper.get("stride", STRIDE), p.hyper.get("padding", PADDING), h, w)
            wmat = p.weights.reshape(c, -1)
            gx = wmat @ gcols
            gw = (_merge_batch(ctx) @ _merge_batch(gcols).T).reshape(p.weights.shape)
            gb = g.sum(axis=(0, 2, 3))
        self.grads = [gw, gb]
        return gx.reshape(x_shape)

    def clear_cache(self):
        self._cache = None


class Network:
    """Sequential stack of :class:`Layer` objects."""

    def __init__(self, layers, input_shape):
        if not layers:
            raise ConfigurationError("a network needs at least one layer")
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            if np.prod(layer.in_shape) != np.prod(shape):
                raise ConfigurationError(
                    f"layer {i} expects input {layer.in_shape}, previous output is {shape}")
            shape = layer.out_shape
        self.output_shape = shape

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape and int(np.prod(x.shape[1:])) != int(np.prod(self.input_shape)):
            raise ConfigurationError(
                f"layer 0 expects per-sample input {self.input_shape}, got {x.shape[1:]}")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def backward(self, grad_out, from_logits=False):
        """Back-propagate through every layer; returns the gradient w.r.t. the input.

        ``from_logits`` means ``grad_out`` is already taken with respect to the
        last layer's pre-activation.
        """
        g = grad_out
        for i, layer in enumerate(reversed(self.layers)):
            g = layer.backward(g, skip_activation=from_logits and i == 0)
        return g

    def gradients(self):
        return [layer.grads for layer in self.layers]

    def adam_step(self, learning_rate):
        for i, layer in enumerate(self.layers):
            if layer.grads is None:
                raise UsageError(f"layer {i} has no gradients; call backward first")
            adam_step([layer.params.weights, layer.params.bias], layer.grads, layer.adam,
                      learning_rate, layer_index=i)

    def clear_cache(self):
        for layer in self.layers:
            layer.clear_cache()
            layer.grads = None

    def copy(self):
        self.clear_cache()
        return copy.deepcopy(self)

    def n_parameters(self):
        return sum(layer.params.weights.size + layer.params.bias.size for layer in self.layers)


def forward(network, x):
    """Run ``network`` on ``x`` and cache intermediates for :func:`backward`."""
    return network.forward(x)


def backward(network, output_gradient, from_logits=False):
    """Gradients of every layer's ``(weights, bias)`` plus the input gradient."""
    grad_input = network.backward(output_gradient, from_logits=from_logits)
    return network.gradients(), grad_input
