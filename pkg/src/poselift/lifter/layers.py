"""1D network layers with hand-written forward and backward passes.

All arrays are float64 and shaped (batch, channels, time). Layers cache what
their backward pass needs; parameter gradients are stored on the layer by
backward() and collected by the model.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError


def conv1d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
                   dilation: int = 1) -> np.ndarray:
    """Valid (unpadded) dilated 1D convolution.

    out[c, t] = bias[c] + sum_{i,j} kernel[c, i, j] * x[i, t + j * dilation]

    x may be (C_in, T) or batched (N, C_in, T); output drops (k-1)*dilation
    time steps.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    c_out, c_in, k = kernel.shape
    if x.shape[1] != c_in:
        raise ValidationError(f"input has {x.shape[1]} channels, kernel expects {c_in}")
    span = (k - 1) * dilation
    t_out = x.shape[2] - span
    if t_out < 1:
        raise ValidationError("window too short for the receptive field")
    out = np.zeros((x.shape[0], c_out, t_out))
    for j in range(k):
        sl = x[:, :, j * dilation:j * dilation + t_out]
        out += np.matmul(kernel[:, :, j], sl)
    out += bias[None, :, None]
    return out[0] if squeeze else out


def conv1d_backward(x: np.ndarray, kernel: np.ndarray, grad_out: np.ndarray,
                    dilation: int = 1):
    """Gradients of conv1d_forward; returns (grad_x, grad_kernel, grad_bias)."""
    c_out, c_in, k = kernel.shape
    t_out = grad_out.shape[-1]
    grad_x = np.zeros_like(x)
    grad_kernel = np.zeros_like(kernel)
    grad_bias = grad_out.sum(axis=(0, 2))
    for j in range(k):
        sl = slice(j * dilation, j * dilation + t_out)
        grad_kernel[:, :, j] = np.tensordot(grad_out, x[:, :, sl], axes=((0, 2), (0, 2)))
        grad_x[:, :, sl] += np.matmul(kernel[:, :, j].T, grad_out)
    return grad_x, grad_kernel, grad_bias


class Conv1d:
    def __init__(self, c_in: int, c_out: int, kernel_size: int, dilation: int = 1,
                 rng=None, init: str = "he"):
        self.dilation = int(dilation)
        if init == "identity":
            if c_in != c_out or kernel_size != 1:
                raise ValidationError("identity init needs a square 1x1 kernel")
            self.weight = np.eye(c_out)[:, :, None]
        else:
            std = np.sqrt(2.0 / (c_in * kernel_size))
            self.weight = rng.normal(0.0, std, size=(c_out, c_in, kernel_size))
        self.bias = np.zeros(c_out)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return conv1d_forward(x, self.weight, self.bias, self.dilation)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        grad_x, self.grad_weight, self.grad_bias = conv1d_backward(
            self._x, self.weight, grad_out, self.dilation)
        return grad_x


class BatchNorm1d:
    """Per-channel batch normalization over the (batch, time) axes."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(channels)
        self.beta = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.grad_gamma = np.zeros(channels)
        self.grad_beta = np.zeros(channels)
        self._cache = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        n = x.shape[0] * x.shape[2]
        if train:
            if n < 2:
                raise ValidationError("batchnorm needs at least 2 samples in train mode")
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))  # biased, also used for the running update
            self.running_mean = (1.0 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1.0 - self.momentum) * self.running_var + self.momentum * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None]) * inv_std[None, :, None]
        self._cache = (xhat, inv_std, train, n)
        return self.gamma[None, :, None] * xhat + self.beta[None, :, None]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        xhat, inv_std, train, n = self._cache
        self.grad_gamma = (grad_out * xhat).sum(axis=(0, 2))
        self.grad_beta = grad_out.sum(axis=(0, 2))
        g = grad_out * self.gamma[None, :, None]
        if not train:
            return g * inv_std[None, :, None]
        # Full backward through the batch statistics.
        sum_g = g.sum(axis=(0, 2), keepdims=True)
        sum_gx = (g * xhat).sum(axis=(0, 2), keepdims=True)
        return (inv_std[None, :, None] / n) * (n * g - sum_g - xhat * sum_gx)


def dropout(x: np.ndarray, rate: float, rng, train: bool) -> np.ndarray:
    """Inverted dropout; identity in eval mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValidationError("dropout rate must lie in [0, 1)")
    if not train or rate == 0.0:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask


class Dropout:
    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValidationError("dropout rate must lie in [0, 1)")
        self.rate = rate
        self._mask = None

    def forward(self, x: np.ndarray, train: bool, rng=None, reuse_mask: bool = False) -> np.ndarray:
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if reuse_mask:
            if self._mask is None or self._mask.shape != x.shape:
                raise ValidationError("no cached dropout mask to reuse")
        else:
            self._mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._mask is None:
            return grad_out
        return grad_out * self._mask


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0.0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return np.where(self._mask, grad_out, 0.0)
