"""Convert published pretrained weights into the portable container.

Requires TensorFlow/Keras only here; the rest of the package never imports
it. Typical use, once, on a machine with the weight archives available:

    python -m retino_bench.backbones.convert VGG16 --weights imagenet \
        --out weights/vgg16.npz

The resulting ``.npz`` holds one float32 array per layer part (for example
``block1_conv1/kernel``) plus a manifest recording the backbone id and
canonical layer order. Models that carry input-scaling layers internally
(EfficientNetB0) get their scaling folded into a per-channel affine stored
in the manifest, expressed over unit-domain [0,1] inputs.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from ..checkpoint import save_arrays
from . import BackboneId, architecture_for

_PART_NAMES = {
    "Conv2D": ("kernel", "bias"),
    "DepthwiseConv2D": ("depthwise_kernel", "bias"),
    "BatchNormalization": ("gamma", "beta", "moving_mean", "moving_variance"),
}


def _fold_input_affine(model) -> dict | None:
    """Fold any Rescaling/Normalization prefix into ``y = scale*u + offset``
    over unit-domain input u (raw pixels / 255)."""
    a = np.ones(3, dtype=np.float64)
    b = np.zeros(3, dtype=np.float64)
    seen = False
    for layer in model.layers:
        kind = type(layer).__name__
        if kind == "Rescaling":
            s = np.broadcast_to(np.asarray(layer.scale, dtype=np.float64), (3,))
            o = np.broadcast_to(np.asarray(layer.offset, dtype=np.float64), (3,))
            a, b = s * a, s * b + o
            seen = True
        elif kind == "Normalization":
            mean = np.asarray(layer.mean, dtype=np.float64).reshape(-1)
            var = np.asarray(layer.variance, dtype=np.float64).reshape(-1)
            s = 1.0 / np.sqrt(np.broadcast_to(var, (3,)))
            m = np.broadcast_to(mean, (3,))
            a, b = s * a, s * (b - m)
            seen = True
    if not seen:
        return None
    # variable change raw = 255 * unit
    return {"scale": (a * 255.0).tolist(), "offset": b.tolist()}


def convert_keras_model(model, backbone_id: BackboneId):
    """Extract arrays and manifest from an in-memory Keras model."""
    expected = architecture_for(backbone_id).param_shapes()
    arrays: dict[str, np.ndarray] = {}
    for layer in model.layers:
        parts = _PART_NAMES.get(type(layer).__name__)
        if parts is None:
            continue
        for part, value in zip(parts, layer.get_weights()):
            key = f"{layer.name}/{part}"
            if key in expected:
                arrays[key] = np.asarray(value, dtype=np.float32)
    missing = [name for name in expected if name not in arrays]
    if missing:
        raise ValueError(f"model is missing {len(missing)} expected arrays, e.g. {missing[:3]}")
    for name, shape in expected.items():
        if tuple(arrays[name].shape) != shape:
            raise ValueError(f"{name}: expected shape {shape}, got {arrays[name].shape}")

    manifest = {
        "backbone_id": backbone_id.value,
        "layer_order": list(expected.keys()),
    }
    ingress = _fold_input_affine(model)
    if ingress is not None:
        manifest["ingress"] = ingress
    return arrays, manifest


def _build_keras_model(backbone_id: BackboneId, weights):
    from tensorflow import keras  # deferred heavy import

    builders = {
        BackboneId.VGG16: keras.applications.VGG16,
        BackboneId.RESNET50V2: keras.applications.ResNet50V2,
        BackboneId.EFFICIENTNET_B0: keras.applications.EfficientNetB0,
    }
    return builders[backbone_id](
        include_top=False, weights=weights, input_shape=(224, 224, 3)
    )


def convert(backbone_id: BackboneId | str, weights: str, out_path: str) -> None:
    if isinstance(backbone_id, str):
        backbone_id = BackboneId.parse(backbone_id)
    model = _build_keras_model(backbone_id, weights)
    arrays, manifest = convert_keras_model(model, backbone_id)
    manifest["weights_origin"] = weights
    save_arrays(out_path, arrays, manifest)


def record_golden(backbone_id: BackboneId | str, weights: str, out_prefix: str) -> None:
    """Run the reference toolchain once on the all-black image and store the
    globally pooled terminal features as a golden file (float32 binary plus
    JSON header) for cross-implementation checks."""
    from ..checkpoint import save_golden

    if isinstance(backbone_id, str):
        backbone_id = BackboneId.parse(backbone_id)
    from tensorflow import keras

    model = _build_keras_model(backbone_id, weights)
    raw = np.zeros((1, 224, 224, 3), dtype=np.float32)
    if backbone_id is BackboneId.VGG16:
        x = keras.applications.vgg16.preprocess_input(raw.copy())
    elif backbone_id is BackboneId.RESNET50V2:
        x = keras.applications.resnet_v2.preprocess_input(raw.copy())
    else:
        x = raw  # scaling layers live inside the model
    pooled = model.predict(x, verbose=0).mean(axis=(1, 2))[0]
    save_golden(out_prefix, pooled, {
        "backbone_id": backbone_id.value,
        "input": "zero-image",
        "weights_origin": weights,
    })


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("backbone", choices=["VGG16", "ResNet50V2", "EfficientNetB0"])
    parser.add_argument("--weights", default="imagenet",
                        help="'imagenet' or a path to a Keras weights archive")
    parser.add_argument("--out", required=True, help="output .npz container path")
    args = parser.parse_args(argv)
    convert(args.backbone, args.weights, args.out)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
