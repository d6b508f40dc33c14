"""ResNet50V2 feature extractor: pre-activation bottleneck blocks.

Stem: 7x7/2 convolution (explicit 3-pad) then 3x3/2 max-pool (explicit
1-pad). Four stacks of [3, 4, 6, 3] bottleneck blocks with widths
64/128/256/512; each stack downsamples in its *last* block except the final
stack. A trailing batch-norm + ReLU produces the 7x7x2048 terminal map.
"""

from __future__ import annotations

import numpy as np

from . import ops

FEATURE_DIM = 2048
TERMINAL_MAP = (7, 7, 2048)
INPUT_SHAPE = (224, 224, 3)
_BN_EPS = 1.001e-5

# (stack name, bottleneck width, block count, stride of the last block)
_STACKS = (("conv2", 64, 3, 2), ("conv3", 128, 4, 2), ("conv4", 256, 6, 2), ("conv5", 512, 3, 1))


def _bn_shapes(shapes: dict, name: str, channels: int) -> None:
    for part in ("gamma", "beta", "moving_mean", "moving_variance"):
        shapes[f"{name}/{part}"] = (channels,)


def param_shapes() -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    shapes["conv1_conv/kernel"] = (7, 7, 3, 64)
    shapes["conv1_conv/bias"] = (64,)
    cin = 64
    for stack, width, blocks, _ in _STACKS:
        for b in range(1, blocks + 1):
            name = f"{stack}_block{b}"
            _bn_shapes(shapes, f"{name}_preact_bn", cin)
            if b == 1:
                shapes[f"{name}_0_conv/kernel"] = (1, 1, cin, 4 * width)
                shapes[f"{name}_0_conv/bias"] = (4 * width,)
            shapes[f"{name}_1_conv/kernel"] = (1, 1, cin, width)
            _bn_shapes(shapes, f"{name}_1_bn", width)
            shapes[f"{name}_2_conv/kernel"] = (3, 3, width, width)
            _bn_shapes(shapes, f"{name}_2_bn", width)
            shapes[f"{name}_3_conv/kernel"] = (1, 1, width, 4 * width)
            shapes[f"{name}_3_conv/bias"] = (4 * width,)
            cin = 4 * width
    _bn_shapes(shapes, "post_bn", cin)
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


def _block(x: np.ndarray, weights: dict, name: str, width: int,
           stride: int, conv_shortcut: bool) -> np.ndarray:
    preact = ops.relu(_bn(x, weights, f"{name}_preact_bn"))
    if conv_shortcut:
        shortcut = ops.conv2d(preact, weights[f"{name}_0_conv/kernel"], stride=stride,
                              padding="valid", bias=weights[f"{name}_0_conv/bias"])
    else:
        shortcut = x[:, ::stride, ::stride, :] if stride > 1 else x
    y = ops.conv2d(preact, weights[f"{name}_1_conv/kernel"], stride=1, padding="valid")
    y = ops.relu(_bn(y, weights, f"{name}_1_bn"))
    y = ops.pad2d(y, (1, 1), (1, 1))
    y = ops.conv2d(y, weights[f"{name}_2_conv/kernel"], stride=stride, padding="valid")
    y = ops.relu(_bn(y, weights, f"{name}_2_bn"))
    y = ops.conv2d(y, weights[f"{name}_3_conv/kernel"], stride=1, padding="valid",
                   bias=weights[f"{name}_3_conv/bias"])
    return shortcut + y


def forward(x: np.ndarray, weights: dict[str, np.ndarray]) -> np.ndarray:
    x = ops.pad2d(x, (3, 3), (3, 3))
    x = ops.conv2d(x, weights["conv1_conv/kernel"], stride=2, padding="valid",
                   bias=weights["conv1_conv/bias"])
    x = ops.pad2d(x, (1, 1), (1, 1))
    x = ops.max_pool2d(x, pool=3, stride=2, padding="valid")
    for stack, width, blocks, last_stride in _STACKS:
        for b in range(1, blocks + 1):
            stride = last_stride if b == blocks else 1
            x = _block(x, weights, f"{stack}_block{b}", width, stride, conv_shortcut=(b == 1))
    return ops.relu(_bn(x, weights, "post_bn"))


def ingress(x_unit: np.ndarray) -> np.ndarray:
    """Unit-domain RGB to the published model's [-1, 1] convention."""
    return x_unit * 2.0 - 1.0
