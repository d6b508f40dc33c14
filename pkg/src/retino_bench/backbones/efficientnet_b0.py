"""EfficientNetB0 feature extractor: MBConv blocks with squeeze-excitation.

Stem 3x3/2 convolution, seven mobile inverted-bottleneck stages with
repeats [1, 2, 2, 3, 3, 4, 1] and output widths
16/24/40/80/112/192/320, then a 1x1 head convolution to the 7x7x1280
terminal map. Batch-norm epsilon is 1e-3; activations are swish except the
sigmoid gate inside squeeze-excitation.
"""

from __future__ import annotations

import numpy as np

from . import ops

FEATURE_DIM = 1280
TERMINAL_MAP = (7, 7, 1280)
INPUT_SHAPE = (224, 224, 3)
_BN_EPS = 1e-3
_SE_RATIO = 0.25

# (kernel, repeats, filters_in, filters_out, expand_ratio, first stride)
_STAGES = (
    (3, 1, 32, 16, 1, 1),
    (3, 2, 16, 24, 6, 2),
    (5, 2, 24, 40, 6, 2),
    (3, 3, 40, 80, 6, 2),
    (5, 3, 80, 112, 6, 1),
    (5, 4, 112, 192, 6, 2),
    (3, 1, 192, 320, 6, 1),
)


def _block_plan() -> list[tuple[str, int, int, int, int, int]]:
    """Expanded per-block list: (name, kernel, filters_in, filters_out,
    expand_ratio, stride)."""
    plan = []
    for stage_index, (kernel, repeats, fin, fout, expand, stride) in enumerate(_STAGES, start=1):
        for j in range(repeats):
            name = f"block{stage_index}{chr(ord('a') + j)}"
            if j == 0:
                plan.append((name, kernel, fin, fout, expand, stride))
            else:
                plan.append((name, kernel, fout, fout, expand, 1))
    return plan


_BLOCKS = tuple(_block_plan())


def _bn_shapes(shapes: dict, name: str, channels: int) -> None:
    for part in ("gamma", "beta", "moving_mean", "moving_variance"):
        shapes[f"{name}/{part}"] = (channels,)


def param_shapes() -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    shapes["stem_conv/kernel"] = (3, 3, 3, 32)
    _bn_shapes(shapes, "stem_bn", 32)
    for name, kernel, fin, fout, expand, _ in _BLOCKS:
        filters = fin * expand
        if expand != 1:
            shapes[f"{name}_expand_conv/kernel"] = (1, 1, fin, filters)
            _bn_shapes(shapes, f"{name}_expand_bn", filters)
        shapes[f"{name}_dwconv/depthwise_kernel"] = (kernel, kernel, filters, 1)
        _bn_shapes(shapes, f"{name}_bn", filters)
        filters_se = max(1, int(fin * _SE_RATIO))
        shapes[f"{name}_se_reduce/kernel"] = (1, 1, filters, filters_se)
        shapes[f"{name}_se_reduce/bias"] = (filters_se,)
        shapes[f"{name}_se_expand/kernel"] = (1, 1, filters_se, filters)
        shapes[f"{name}_se_expand/bias"] = (filters,)
        shapes[f"{name}_project_conv/kernel"] = (1, 1, filters, fout)
        _bn_shapes(shapes, f"{name}_project_bn", fout)
    shapes["top_conv/kernel"] = (1, 1, 320, 1280)
    _bn_shapes(shapes, "top_bn", 1280)
    return shapes


def _bn(x: np.ndarray, weights: dict, name: str) -> np.ndarray:
    return ops.batch_norm(
        x,
        weights[f"{name}/gamma"],
        weights[f"{name}/beta"],
        weights[f"{name}/moving_mean"],
        weights[f"{name}/moving_variance"],
        _BN_EPS,
    )


def _mbconv(x: np.ndarray, weights: dict, name: str, kernel: int,
            fin: int, fout: int, expand: int, stride: int) -> np.ndarray:
    inputs = x
    if expand != 1:
        x = ops.conv2d(x, weights[f"{name}_expand_conv/kernel"], stride=1, padding="same")
        x = ops.swish(_bn(x, weights, f"{name}_expand_bn"))
    if stride == 2:
        ph = ops.same_pad_amounts(x.shape[1], kernel, stride)
        pw = ops.same_pad_amounts(x.shape[2], kernel, stride)
        x = ops.pad2d(x, ph, pw)
        x = ops.depthwise_conv2d(x, weights[f"{name}_dwconv/depthwise_kernel"],
                                 stride=stride, padding="valid")
    else:
        x = ops.depthwise_conv2d(x, weights[f"{name}_dwconv/depthwise_kernel"],
                                 stride=1, padding="same")
    x = ops.swish(_bn(x, weights, f"{name}_bn"))

    # squeeze-excitation gate
    se = ops.global_avg_pool(x)  # (N, C)
    se = ops.swish(se @ weights[f"{name}_se_reduce/kernel"][0, 0] + weights[f"{name}_se_reduce/bias"])
    se = ops.sigmoid(se @ weights[f"{name}_se_expand/kernel"][0, 0] + weights[f"{name}_se_expand/bias"])
    x = x * se[:, None, None, :]

    x = ops.conv2d(x, weights[f"{name}_project_conv/kernel"], stride=1, padding="same")
    x = _bn(x, weights, f"{name}_project_bn")
    if stride == 1 and fin == fout:
        x = x + inputs
    return x


def forward(x: np.ndarray, weights: dict[str, np.ndarray]) -> np.ndarray:
    ph = ops.same_pad_amounts(x.shape[1], 3, 2)
    pw = ops.same_pad_amounts(x.shape[2], 3, 2)
    x = ops.pad2d(x, ph, pw)
    x = ops.conv2d(x, weights["stem_conv/kernel"], stride=2, padding="valid")
    x = ops.swish(_bn(x, weights, "stem_bn"))
    for name, kernel, fin, fout, expand, stride in _BLOCKS:
        x = _mbconv(x, weights, name, kernel, fin, fout, expand, stride)
    x = ops.conv2d(x, weights["top_conv/kernel"], stride=1, padding="same")
    return ops.swish(_bn(x, weights, "top_bn"))


_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


def ingress(x_unit: np.ndarray) -> np.ndarray:
    """Unit-domain RGB standardized with the ImageNet channel statistics."""
    return (x_unit - _MEAN) / _STD
