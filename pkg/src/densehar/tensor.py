"""Numeric kernels for 1D networks with explicit reverse-mode gradients.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 laid out as
``[batch, channels, length]``. Every forward kernel has a matching backward
kernel; the network modules chain them by hand.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, GeometryError, LabelError

DTYPE = np.float64


def as_tensor(x, ndim: int | None = None, name: str = "tensor") -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"{name}: expected {ndim} dims, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ConvSpec:
    kernel_length: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.kernel_length < 1 or self.stride < 1 or self.padding < 0:
            raise GeometryError(f"invalid convolution geometry {self}")

    def output_length(self, in_length: int) -> int:
        span = in_length + 2 * self.padding - self.kernel_length
        if span < 0:
            raise GeometryError(
                f"input length {in_length} (+2*{self.padding} padding) shorter than kernel {self.kernel_length}"
            )
        if span % self.stride:
            raise GeometryError(
                f"length {in_length} with padding {self.padding} and kernel {self.kernel_length} "
                f"is not divisible by stride {self.stride}"
            )
        return span // self.stride + 1


@dataclass
class Parameter:
    """A trainable array plus its gradient and Adam moment buffers."""

    value: np.ndarray
    grad: np.ndarray = field(init=False)
    adam_m: np.ndarray = field(init=False)
    adam_v: np.ndarray = field(init=False)
    step_count: int = 0

    def __post_init__(self):
        self.value = as_tensor(self.value)
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _check_conv(x, w, b):
    if x.ndim != 3 or w.ndim != 3:
        raise DimensionError(f"conv1d expects 3-d input and weights, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(
            f"input has {x.shape[1]} channels but weights expect {w.shape[1]}"
        )
    if b is not None and b.shape != (w.shape[0],):
        raise DimensionError(f"bias shape {b.shape} does not match {w.shape[0]} output channels")


def _columns(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Strided view [B, C, L_out, K] over the zero-padded input."""
    if spec.padding:
        x = np.pad(x, ((0, 0), (0, 0), (spec.padding, spec.padding)))
    cols = np.lib.stride_tricks.sliding_window_view(x, spec.kernel_length, axis=2)
    return cols[:, :, :: spec.stride, :]


def conv1d_forward(x, weights, bias, spec: ConvSpec) -> np.ndarray:
    """Cross-correlation of ``x`` [B, C_in, L] with ``weights`` [C_out, C_in, K]."""
    x = as_tensor(x, 3, "input")
    weights = as_tensor(weights, 3, "weights")
    bias = as_tensor(bias, 1, "bias")
    _check_conv(x, weights, bias)
    spec.output_length(x.shape[2])
    cols = _columns(x, spec)
    out = np.tensordot(cols, weights, axes=([1, 3], [1, 2]))  # [B, L_out, C_out]
    out += bias
    return np.ascontiguousarray(out.transpose(0, 2, 1))


def conv1d_backward(grad_out, saved_input, weights, spec: ConvSpec):
    """Return ``(grad_input, grad_weights, grad_bias)`` for :func:`conv1d_forward`."""
    x = as_tensor(saved_input, 3, "input")
    weights = as_tensor(weights, 3, "weights")
    grad_out = as_tensor(grad_out, 3, "grad_out")
    _check_conv(x, weights, None)
    l_out = spec.output_length(x.shape[2])
    expected = (x.shape[0], weights.shape[0], l_out)
    if grad_out.shape != expected:
        raise DimensionError(f"grad_out shape {grad_out.shape} != forward output {expected}")

    cols = _columns(x, spec)
    grad_w = np.tensordot(grad_out, cols, axes=([0, 2], [0, 2]))  # [C_out, C_in, K]
    grad_b = grad_out.sum(axis=(0, 2))

    gcols = np.tensordot(grad_out, weights, axes=([1], [0]))  # [B, L_out, C_in, K]
    gcols = gcols.transpose(0, 2, 1, 3)  # [B, C_in, L_out, K]
    padded_len = x.shape[2] + 2 * spec.padding
    gpad = np.zeros((x.shape[0], x.shape[1], padded_len), dtype=DTYPE)
    span = spec.stride * (l_out - 1) + 1
    for k in range(spec.kernel_length):
        gpad[:, :, k : k + span : spec.stride] += gcols[:, :, :, k]
    p = spec.padding
    grad_x = gpad[:, :, p : padded_len - p] if p else gpad
    return np.ascontiguousarray(grad_x), grad_w, grad_b


def upconv1d_forward(x, weights, bias) -> np.ndarray:
    """Transposed convolution with stride equal to kernel length (no overlap).

    ``weights`` is [C_in, C_out, K]; the output length is ``K * L``. With
    ``K == 2`` this is the resolution-doubling up-convolution.
    """
    x = as_tensor(x, 3, "input")
    weights = as_tensor(weights, 3, "weights")
    bias = as_tensor(bias, 1, "bias")
    if x.shape[1] != weights.shape[0]:
        raise DimensionError(
            f"input has {x.shape[1]} channels but up-conv weights expect {weights.shape[0]}"
        )
    if bias.shape != (weights.shape[1],):
        raise DimensionError(f"bias shape {bias.shape} does not match {weights.shape[1]} output channels")
    b, _, length = x.shape
    c_out, k = weights.shape[1], weights.shape[2]
    out = np.tensordot(x, weights, axes=([1], [0]))  # [B, L, C_out, K]
    out = out.transpose(0, 2, 1, 3).reshape(b, c_out, length * k)
    out += bias[None, :, None]
    return np.ascontiguousarray(out)


def upconv1d_backward(grad_out, saved_input, weights):
    x = as_tensor(saved_input, 3, "input")
    weights = as_tensor(weights, 3, "weights")
    grad_out = as_tensor(grad_out, 3, "grad_out")
    b, _, length = x.shape
    c_out, k = weights.shape[1], weights.shape[2]
    if grad_out.shape != (b, c_out, length * k):
        raise DimensionError(f"grad_out shape {grad_out.shape} != forward output {(b, c_out, length * k)}")
    g = grad_out.reshape(b, c_out, length, k)
    grad_x = np.tensordot(g, weights, axes=([1, 3], [1, 2]))  # [B, L, C_in]
    grad_w = np.tensordot(x, g, axes=([0, 2], [0, 2]))  # [C_in, C_out, K]
    grad_b = grad_out.sum(axis=(0, 2))
    return np.ascontiguousarray(grad_x.transpose(0, 2, 1)), grad_w, grad_b


# ---------------------------------------------------------------------------
# pooling, activation, dense layers
# ---------------------------------------------------------------------------

def maxpool1d(x):
    """Non-overlapping max pool of width 2. Returns ``(output, argmax)``.

    ``argmax`` holds 0 or 1 per output position; ties pick the earlier sample.
    """
    x = as_tensor(x, 3, "input")
    if x.shape[2] % 2:
        raise GeometryError(f"max pool needs an even length, got {x.shape[2]}")
    pairs = x.reshape(x.shape[0], x.shape[1], -1, 2)
    argmax = (pairs[..., 1] > pairs[..., 0]).astype(np.int8)
    out = np.where(argmax == 1, pairs[..., 1], pairs[..., 0])
    return out, argmax


def maxpool1d_backward(grad_out, argmax):
    grad_out = as_tensor(grad_out, 3, "grad_out")
    if grad_out.shape != argmax.shape:
        raise DimensionError(f"grad_out shape {grad_out.shape} != pooled shape {argmax.shape}")
    g = np.zeros(grad_out.shape + (2,), dtype=DTYPE)
    second = argmax.astype(bool)
    g[..., 0] = np.where(second, 0.0, grad_out)
    g[..., 1] = np.where(second, grad_out, 0.0)
    return g.reshape(grad_out.shape[0], grad_out.shape[1], -1)


def relu(x):
    return np.maximum(as_tensor(x), 0.0)


def relu_backward(grad_out, saved_input):
    return np.where(np.asarray(saved_input) > 0.0, grad_out, 0.0)


def linear_forward(x, weights, bias):
    """Fully connected layer: ``x`` [B, F_in], ``weights`` [F_out, F_in]."""
    x = as_tensor(x, 2, "input")
    if x.shape[1] != weights.shape[1]:
        raise DimensionError(f"input has {x.shape[1]} features but weights expect {weights.shape[1]}")
    return x @ weights.T + bias


def linear_backward(grad_out, saved_input, weights):
    return grad_out @ weights, grad_out.T @ saved_input, grad_out.sum(axis=0)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def softmax(logits, axis: int = 1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits, targets):
    """Mean cross-entropy over every (batch, position) point.

    ``logits`` is [B, N_c] or [B, N_c, N]; ``targets`` holds the class index of
    each point with the class axis removed. Returns ``(loss, grad_logits)``.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    n_classes = logits.shape[1]
    expected = logits.shape[:1] + logits.shape[2:]
    if targets.shape != expected:
        raise DimensionError(f"targets shape {targets.shape} != {expected}")
    bad = np.argwhere((targets < 0) | (targets >= n_classes))
    if len(bad):
        pos = tuple(int(i) for i in bad[0])
        raise LabelError(
            f"target {int(targets[pos])} at position {pos} outside [0, {n_classes})"
        )
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_p = z - log_norm
    idx = np.expand_dims(targets.astype(np.intp), 1)
    picked = np.take_along_axis(log_p, idx, axis=1)
    count = targets.size
    loss = float(-picked.sum() / count)
    grad = np.exp(log_p)
    np.put_along_axis(grad, idx, np.take_along_axis(grad, idx, axis=1) - 1.0, axis=1)
    grad /= count
    return loss, grad


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------

def adam_step(param: Parameter, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam update, in place; clears the gradient afterwards."""
    param.step_count += 1
    t = param.step_count
    g = param.grad
    m, v = param.adam_m, param.adam_v
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    m_hat_scale = 1.0 / (1.0 - beta1**t)
    v_hat_scale = 1.0 / (1.0 - beta2**t)
    denom = np.sqrt(v * v_hat_scale)
    denom += eps
    param.value -= (lr * m_hat_scale) * m / denom
    g.fill(0.0)


# ---------------------------------------------------------------------------
# finite-difference checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    per_input: list
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def numerical_gradient(f: Callable[[], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` with respect to ``x`` (mutated in place, then restored)."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad


def grad_check(
    forward: Callable[..., np.ndarray],
    backward: Callable[..., Sequence[np.ndarray]],
    inputs: Sequence[np.ndarray],
    tolerance: float = 1e-4,
    step: float = 1e-5,
    seed: int = 0,
    floor: float = 1e-3,
) -> GradCheckReport:
    """Compare ``backward`` against central finite differences.

    The scalar probed is ``sum(forward(*inputs) * R)`` for a fixed random
    ``R``; ``backward(R, *inputs)`` must return one gradient per input.
    Element error is ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``.
    """
    inputs = [as_tensor(a).copy() for a in inputs]
    rng = np.random.default_rng(seed)
    probe = rng.standard_normal(np.shape(forward(*inputs)))

    def scalar():
        return float(np.sum(forward(*inputs) * probe))

    analytic = backward(probe, *inputs)
    errors = []
    for x, a in zip(inputs, analytic):
        num = numerical_gradient(scalar, x, step)
        a = np.asarray(a, dtype=DTYPE)
        if a.shape != num.shape:
            raise DimensionError(f"analytic gradient shape {a.shape} != input shape {num.shape}")
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), floor)
        errors.append(float(np.max(np.abs(a - num) / denom)) if a.size else 0.0)
    return GradCheckReport(max(errors, default=0.0), errors, tolerance)
