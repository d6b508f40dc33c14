"""VGG16 convolutional feature extractor (classification top excluded).

Five blocks of 3x3 same-padded convolutions with ReLU, each followed by a
2x2/2 max-pool; a 224x224x3 input yields a 7x7x512 terminal map.
"""

from __future__ import annotations

import numpy as np

from . import ops

FEATURE_DIM = 512
TERMINAL_MAP = (7, 7, 512)
INPUT_SHAPE = (224, 224, 3)

# (block index, conv count, output channels)
_BLOCKS = ((1, 2, 64), (2, 2, 128), (3, 3, 256), (4, 3, 512), (5, 3, 512))


def param_shapes() -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    cin = 3
    for block, n_convs, cout in _BLOCKS:
        for i in range(1, n_convs + 1):
            name = f"block{block}_conv{i}"
            shapes[f"{name}/kernel"] = (3, 3, cin, cout)
            shapes[f"{name}/bias"] = (cout,)
            cin = cout
    return shapes


def forward(x: np.ndarray, weights: dict[str, np.ndarray]) -> np.ndarray:
    for block, n_convs, _ in _BLOCKS:
        for i in range(1, n_convs + 1):
            name = f"block{block}_conv{i}"
            x = ops.conv2d(x, weights[f"{name}/kernel"], stride=1, padding="same",
                           bias=weights[f"{name}/bias"])
            x = ops.relu(x)
        x = ops.max_pool2d(x, pool=2, stride=2, padding="valid")
    return x


def ingress(x_unit: np.ndarray) -> np.ndarray:
    """Map unit-domain RGB to the published model's input convention:
    0..255 BGR with per-channel mean subtraction."""
    x = x_unit[..., ::-1] * 255.0
    return x - np.array([103.939, 116.779, 123.68], dtype=x_unit.dtype)
