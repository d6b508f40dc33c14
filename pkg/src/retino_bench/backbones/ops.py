"""NHWC inference primitives for the frozen convolutional backbones.

Padding follows the asymmetric rule used by the published architectures:
for stride s and kernel k, total padding is
``max((ceil(n/s) - 1) * s + k - n, 0)`` split as (total//2, total - total//2).
Kernels are stored HWIO; depthwise kernels HWC1.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def same_pad_amounts(size: int, kernel: int, stride: int) -> tuple[int, int]:
    out = -(-size // stride)  # ceil division
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


def pad2d(x: np.ndarray, pad_h: tuple[int, int], pad_w: tuple[int, int], value: float = 0.0) -> np.ndarray:
    if pad_h == (0, 0) and pad_w == (0, 0):
        return x
    return np.pad(x, ((0, 0), pad_h, pad_w, (0, 0)), mode="constant", constant_values=value)


def _padded(x: np.ndarray, kernel_hw: tuple[int, int], stride: int, padding: str, value: float = 0.0) -> np.ndarray:
    if padding == "valid":
        return x
    if padding == "same":
        ph = same_pad_amounts(x.shape[1], kernel_hw[0], stride)
        pw = same_pad_amounts(x.shape[2], kernel_hw[1], stride)
        return pad2d(x, ph, pw, value)
    raise ValueError(f"unknown padding {padding!r}")


def conv2d(x: np.ndarray, kernel: np.ndarray, stride: int = 1, padding: str = "same",
           bias: np.ndarray | None = None) -> np.ndarray:
    """Cross-correlation of an NHWC batch with an HWIO kernel."""
    kh, kw, cin, _ = kernel.shape
    if x.shape[3] != cin:
        raise ValueError(f"channel mismatch: input {x.shape[3]}, kernel {cin}")
    xp = _padded(x, (kh, kw), stride, padding)
    if kh == 1 and kw == 1:
        out = np.tensordot(xp[:, ::stride, ::stride, :], kernel[0, 0], axes=([3], [0]))
    else:
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
        # win: (N, H', W', C, kh, kw); contract C, kh, kw against kernel
        out = np.tensordot(win, kernel, axes=([3, 4, 5], [2, 0, 1]))
    if bias is not None:
        out = out + bias
    return out


def depthwise_conv2d(x: np.ndarray, kernel: np.ndarray, stride: int = 1, padding: str = "same") -> np.ndarray:
    """Per-channel convolution; ``kernel`` is (kh, kw, C, 1)."""
    kh, kw = kernel.shape[:2]
    taps = kernel[..., 0]  # (kh, kw, C)
    xp = _padded(x, (kh, kw), stride, padding)
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    # win: (N, H', W', C, kh, kw) * taps (kh, kw, C) summed over the window
    return np.einsum("nhwcij,ijc->nhwc", win, taps, optimize=True)


def max_pool2d(x: np.ndarray, pool: int, stride: int, padding: str = "valid") -> np.ndarray:
    xp = _padded(x, (pool, pool), stride, padding, value=-np.inf)
    win = sliding_window_view(xp, (pool, pool), axis=(1, 2))[:, ::stride, ::stride]
    return win.max(axis=(4, 5))


def batch_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
               mean: np.ndarray, variance: np.ndarray, epsilon: float) -> np.ndarray:
    scale = gamma / np.sqrt(variance + epsilon)
    return x * scale + (beta - mean * scale)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def swish(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=(1, 2))
