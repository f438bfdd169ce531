"""Stateful layer wrappers around the kernels in :mod:`densehar.tensor`.

A layer remembers what its backward pass needs from the latest forward call
and accumulates parameter gradients into ``Parameter.grad``.
"""
from __future__ import annotations

import numpy as np

from .tensor import (
    ConvSpec,
    Parameter,
    conv1d_backward,
    conv1d_forward,
    linear_backward,
    linear_forward,
    maxpool1d,
    maxpool1d_backward,
    relu_backward,
    upconv1d_backward,
    upconv1d_forward,
)


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Conv1d:
    def __init__(self, c_in, c_out, kernel_length, padding=0, stride=1, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.spec = ConvSpec(kernel_length, stride, padding)
        self.weight = Parameter(he_normal(rng, (c_out, c_in, kernel_length), c_in * kernel_length))
        self.bias = Parameter(np.zeros(c_out))
        self._x = None

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x):
        self._x = x
        return conv1d_forward(x, self.weight.value, self.bias.value, self.spec)

    def backward(self, grad):
        gx, gw, gb = conv1d_backward(grad, self._x, self.weight.value, self.spec)
        self.weight.grad += gw
        self.bias.grad += gb
        self._x = None
        return gx


class UpConv1d:
    """Transposed convolution with kernel length == stride == ``factor``."""

    def __init__(self, c_in, c_out, factor=2, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Parameter(he_normal(rng, (c_in, c_out, factor), c_in))
        self.bias = Parameter(np.zeros(c_out))
        self._x = None

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x):
        self._x = x
        return upconv1d_forward(x, self.weight.value, self.bias.value)

    def backward(self, grad):
        gx, gw, gb = upconv1d_backward(grad, self._x, self.weight.value)
        self.weight.grad += gw
        self.bias.grad += gb
        self._x = None
        return gx


class Linear:
    def __init__(self, f_in, f_out, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Parameter(he_normal(rng, (f_out, f_in), f_in))
        self.bias = Parameter(np.zeros(f_out))
        self._x = None

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x):
        self._x = x
        return linear_forward(x, self.weight.value, self.bias.value)

    def backward(self, grad):
        gx, gw, gb = linear_backward(grad, self._x, self.weight.value)
        self.weight.grad += gw
        self.bias.grad += gb
        self._x = None
        return gx


class ReLU:
    def __init__(self):
        self._x = None

    def params(self):
        return {}

    def forward(self, x):
        self._x = x
        return np.maximum(x, 0.0)

    def backward(self, grad):
        g = relu_backward(grad, self._x)
        self._x = None
        return g


class MaxPool:
    def __init__(self):
        self._argmax = None

    def params(self):
        return {}

    def forward(self, x):
        out, self._argmax = maxpool1d(x)
        return out

    def backward(self, grad):
        g = maxpool1d_backward(grad, self._argmax)
        self._argmax = None
        return g


class Sequential:
    def __init__(self, *layers):
        self.layers = list(layers)

    def params(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for name, p in layer.params().items():
                out[f"{i}.{name}"] = p
        return out

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


def conv_block(c_in, c_out, rng, n_convs=2):
    """``n_convs`` x (1x3 conv, same padding, ReLU)."""
    layers = []
    for i in range(n_convs):
        layers += [Conv1d(c_in if i == 0 else c_out, c_out, 3, padding=1, rng=rng), ReLU()]
    return Sequential(*layers)
