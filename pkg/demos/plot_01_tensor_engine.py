"""
Kernels and gradient checks
===========================

The engine is a handful of forward/backward pairs over float64 arrays shaped
``[batch, channels, length]``. Every backward can be checked against central
finite differences with ``grad_check``.
"""

import numpy as np

from densehar.tensor import ConvSpec, conv1d_backward, conv1d_forward, grad_check, maxpool1d, upconv1d_forward

rng = np.random.default_rng(0)

# A 1x3 convolution with one sample of zero padding keeps the length.
x = rng.standard_normal((2, 3, 16))
w = rng.standard_normal((8, 3, 3))
b = np.zeros(8)
same = ConvSpec(kernel_length=3, padding=1)
print("conv1d:", x.shape, "->", conv1d_forward(x, w, b, same).shape)

# Pooling halves the length, up-convolution doubles it again.
pooled, argmax = maxpool1d(x)
print("maxpool:", x.shape, "->", pooled.shape)
print("upconv:", pooled.shape, "->", upconv1d_forward(pooled, rng.standard_normal((3, 3, 2)), np.zeros(3)).shape)

# The backward pass returns gradients for input, weights and bias.
report = grad_check(
    lambda x, w, b: conv1d_forward(x, w, b, same),
    lambda g, x, w, b: conv1d_backward(g, x, w, same),
    [x, w, b],
)
print(f"conv1d grad check: max relative error {report.max_rel_error:.2e}, passed={report.passed}")

# A broken backward is caught: here the weight gradient is scaled by 1.01.
def broken(g, x, w, b):
    gx, gw, gb = conv1d_backward(g, x, w, same)
    return gx, 1.01 * gw, gb

report = grad_check(lambda x, w, b: conv1d_forward(x, w, b, same), broken, [x, w, b])
print(f"corrupted backward: max relative error {report.max_rel_error:.2e}, passed={report.passed}")
