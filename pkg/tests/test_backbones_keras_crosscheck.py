"""Cross-implementation check of the three native backbone forwards against
the reference toolchain, using randomized weights converted through the
portable container path. Skipped when TensorFlow is not installed."""

import numpy as np
import pytest

tf = pytest.importorskip("tensorflow")

from retino_bench.backbones import BackboneId, architecture_for  # noqa: E402
from retino_bench.backbones.convert import convert_keras_model  # noqa: E402


def _randomize(model, seed):
    """Fan-in-scaled random weights keep activations O(1) through deep stacks."""
    rng = np.random.default_rng(seed)
    for layer in model.layers:
        kind = type(layer).__name__
        weights = layer.get_weights()
        if not weights:
            continue
        if kind == "BatchNormalization":
            gamma, beta, mean, var = weights
            layer.set_weights([
                rng.uniform(0.8, 1.2, gamma.shape).astype(np.float32),
                (rng.standard_normal(beta.shape) * 0.05).astype(np.float32),
                (rng.standard_normal(mean.shape) * 0.05).astype(np.float32),
                rng.uniform(0.8, 1.2, var.shape).astype(np.float32),
            ])
        else:
            new = []
            for w in weights:
                if w.ndim >= 2:
                    fan_in = int(np.prod(w.shape[:-1]))
                    new.append((rng.standard_normal(w.shape) / np.sqrt(fan_in)).astype(np.float32))
                else:
                    new.append((rng.standard_normal(w.shape) * 0.01).astype(np.float32))
            layer.set_weights(new)


CASES = [
    (BackboneId.VGG16, "VGG16"),
    (BackboneId.RESNET50V2, "ResNet50V2"),
    (BackboneId.EFFICIENTNET_B0, "EfficientNetB0"),
]


@pytest.mark.parametrize("backbone_id,keras_name", CASES)
def test_forward_matches_reference_toolchain(backbone_id, keras_name):
    from tensorflow import keras

    builder = getattr(keras.applications, keras_name)
    tf_model = builder(include_top=False, weights=None, input_shape=(224, 224, 3))
    _randomize(tf_model, seed=hash(keras_name) % 2**31)
    arrays, manifest = convert_keras_model(tf_model, backbone_id)
    assert manifest["backbone_id"] == backbone_id.value

    rng = np.random.default_rng(7)
    raw = rng.uniform(0, 255, size=(2, 224, 224, 3)).astype(np.float32)
    ref_map = tf_model.predict(raw, verbose=0)

    # VGG16/ResNet50V2 apply preprocessing outside the model; with untrained
    # weights the EfficientNet normalization prefix reduces to x/255, which
    # the folded affine in the manifest must report as the identity over the
    # unit domain.
    arch = architecture_for(backbone_id)
    if backbone_id is BackboneId.EFFICIENTNET_B0:
        np.testing.assert_allclose(manifest["ingress"]["scale"], [1.0, 1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(manifest["ingress"]["offset"], [0.0, 0.0, 0.0], atol=1e-12)
        mine_map = arch.forward((raw / 255.0).astype(np.float32), arrays)
    else:
        mine_map = arch.forward(raw, arrays)

    assert mine_map.shape == ref_map.shape
    scale = max(float(np.abs(ref_map).max()), 1e-3)
    max_abs = float(np.abs(mine_map - ref_map).max())
    assert max_abs <= 1e-4 * scale, f"map diff {max_abs:.3e} vs scale {scale:.3e}"

    pooled_ref = ref_map.mean(axis=(1, 2))
    pooled_mine = mine_map.mean(axis=(1, 2))
    pooled_scale = max(float(np.abs(pooled_ref).max()), 1e-3)
    assert float(np.abs(pooled_mine - pooled_ref).max()) <= 1e-4 * pooled_scale
