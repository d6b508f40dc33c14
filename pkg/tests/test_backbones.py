import os
from pathlib import Path

import numpy as np
import numpy.testing as npt
import pytest

from retino_bench.backbones import (
    BackboneId,
    architecture_for,
    build_backbone,
    layer_order,
)
from retino_bench.backbones import ops
from retino_bench.checkpoint import save_arrays
from retino_bench.errors import (
    ShapeMismatchError,
    UnknownBackboneError,
    WeightArchiveMissingError,
)


# --- primitive ops against naive loops -----------------------------------------


def naive_conv2d(x, kernel, stride, pad_h, pad_w, bias=None):
    x = np.pad(x, ((0, 0), pad_h, pad_w, (0, 0)))
    n, h, w, _ = x.shape
    kh, kw, cin, cout = kernel.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    out = np.zeros((n, oh, ow, cout), dtype=np.float64)
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                patch = x[b, i * stride : i * stride + kh, j * stride : j * stride + kw]
                for o in range(cout):
                    out[b, i, j, o] = np.sum(patch * kernel[..., o])
    if bias is not None:
        out += bias
    return out


def test_conv2d_matches_naive():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 7, 6, 3))
    kernel = rng.standard_normal((3, 3, 3, 4))
    bias = rng.standard_normal(4)

    got = ops.conv2d(x, kernel, stride=1, padding="same", bias=bias)
    want = naive_conv2d(x, kernel, 1, (1, 1), (1, 1), bias)
    npt.assert_allclose(got, want, atol=1e-12)

    got = ops.conv2d(x, kernel, stride=2, padding="valid")
    want = naive_conv2d(x, kernel, 2, (0, 0), (0, 0))
    npt.assert_allclose(got, want, atol=1e-12)


def test_conv2d_same_padding_asymmetric_for_even_input():
    # 224 with k=3 s=2 pads (0,1): the published downsampling convention
    assert ops.same_pad_amounts(224, 3, 2) == (0, 1)
    assert ops.same_pad_amounts(224, 3, 1) == (1, 1)
    assert ops.same_pad_amounts(112, 5, 2) == (1, 2)
    assert ops.same_pad_amounts(7, 3, 1) == (1, 1)


def test_depthwise_conv_matches_per_channel_loop():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 8, 8, 5))
    kernel = rng.standard_normal((3, 3, 5, 1))
    got = ops.depthwise_conv2d(x, kernel, stride=1, padding="same")
    for c in range(5):
        single = naive_conv2d(
            x[..., c : c + 1], kernel[:, :, c : c + 1, :], 1, (1, 1), (1, 1)
        )
        npt.assert_allclose(got[..., c], single[..., 0], atol=1e-12)


def test_max_pool_and_batch_norm():
    x = np.arange(16, dtype=np.float64).reshape(1, 4, 4, 1)
    pooled = ops.max_pool2d(x, 2, 2)
    npt.assert_array_equal(pooled[0, :, :, 0], [[5, 7], [13, 15]])

    rng = np.random.default_rng(2)
    v = rng.standard_normal((1, 3, 3, 4))
    gamma, beta = rng.standard_normal(4), rng.standard_normal(4)
    mean, var = rng.standard_normal(4), rng.uniform(0.5, 2, 4)
    got = ops.batch_norm(v, gamma, beta, mean, var, 1e-3)
    want = gamma * (v - mean) / np.sqrt(var + 1e-3) + beta
    npt.assert_allclose(got, want, atol=1e-12)


def test_activation_helpers():
    x = np.array([-3.0, 0.0, 2.0])
    npt.assert_array_equal(ops.relu(x), [0.0, 0.0, 2.0])
    npt.assert_allclose(ops.sigmoid(x), 1 / (1 + np.exp(-x)), atol=1e-12)
    npt.assert_allclose(ops.swish(x), x / (1 + np.exp(-x)), atol=1e-12)
    big = np.array([-1000.0, 1000.0])
    assert np.all(np.isfinite(ops.sigmoid(big)))


# --- architecture contracts -----------------------------------------------------


@pytest.mark.parametrize(
    "backbone_id,feature_dim,terminal",
    [
        (BackboneId.VGG16, 512, (7, 7, 512)),
        (BackboneId.RESNET50V2, 2048, (7, 7, 2048)),
        (BackboneId.EFFICIENTNET_B0, 1280, (7, 7, 1280)),
    ],
)
def test_architecture_terminal_shapes(backbone_id, feature_dim, terminal):
    backbone = build_backbone(backbone_id, "random:3")
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, size=(1, 224, 224, 3)).astype(np.float32)
    fmap = backbone.terminal_map(x)
    assert fmap.shape == (1, *terminal)
    feats = backbone.extract(x)
    assert feats.shape == (1, feature_dim)
    npt.assert_allclose(feats[0], fmap.mean(axis=(1, 2))[0], rtol=1e-6)


def test_efficientnet_stage_table():
    """Stage-by-stage resolutions and widths of the B0 block plan."""
    from retino_bench.backbones.efficientnet_b0 import _BLOCKS, _STAGES

    assert [s[1] for s in _STAGES] == [1, 2, 2, 3, 3, 4, 1]          # repeats
    assert [s[3] for s in _STAGES] == [16, 24, 40, 80, 112, 192, 320]  # widths
    assert len(_BLOCKS) == 16

    # walk the plan and track the spatial resolution from 112 (post stem)
    resolution = 112
    seen = []
    for name, kernel, fin, fout, expand, stride in _BLOCKS:
        if stride == 2:
            resolution //= 2
        seen.append((name, resolution, fout))
    assert seen[0] == ("block1a", 112, 16)
    assert seen[2] == ("block2b", 56, 24)
    assert seen[4] == ("block3b", 28, 40)
    assert seen[7] == ("block4c", 14, 80)
    assert seen[10] == ("block5c", 14, 112)
    assert seen[14] == ("block6d", 7, 192)
    assert seen[15] == ("block7a", 7, 320)


def test_param_shape_spot_checks():
    eff = architecture_for(BackboneId.EFFICIENTNET_B0).param_shapes()
    assert eff["stem_conv/kernel"] == (3, 3, 3, 32)
    assert eff["block2a_expand_conv/kernel"] == (1, 1, 16, 96)
    assert eff["block2a_se_reduce/kernel"] == (1, 1, 96, 4)  # se width = in/4
    assert eff["block4a_dwconv/depthwise_kernel"] == (3, 3, 240, 1)
    assert eff["top_conv/kernel"] == (1, 1, 320, 1280)

    res = architecture_for(BackboneId.RESNET50V2).param_shapes()
    assert res["conv1_conv/kernel"] == (7, 7, 3, 64)
    assert res["conv2_block1_0_conv/kernel"] == (1, 1, 64, 256)
    assert res["conv5_block3_3_conv/kernel"] == (1, 1, 512, 2048)
    assert res["post_bn/gamma"] == (2048,)

    vgg = architecture_for(BackboneId.VGG16).param_shapes()
    assert len([k for k in vgg if k.endswith("/kernel")]) == 13
    assert vgg["block5_conv3/kernel"] == (3, 3, 512, 512)


def test_backbone_extraction_deterministic():
    backbone = build_backbone(BackboneId.EFFICIENTNET_B0, "random:5")
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, size=(2, 224, 224, 3)).astype(np.float32)
    npt.assert_array_equal(backbone.extract(x), backbone.extract(x))


def test_random_weight_source_seeding():
    a = build_backbone(BackboneId.VGG16, "random:9")
    b = build_backbone(BackboneId.VGG16, "random:9")
    c = build_backbone(BackboneId.VGG16, "random:10")
    for name in layer_order(BackboneId.VGG16):
        npt.assert_array_equal(a.weights[name], b.weights[name])
    assert any(
        not np.array_equal(a.weights[n], c.weights[n]) for n in layer_order(BackboneId.VGG16)
    )


def test_ingress_hooks():
    from retino_bench.backbones import efficientnet_b0, resnet50v2, vgg16

    unit = np.zeros((1, 2, 2, 3), dtype=np.float32)
    npt.assert_allclose(resnet50v2.ingress(unit), -1.0)
    npt.assert_allclose(resnet50v2.ingress(unit + 1.0), 1.0)

    vgg_in = vgg16.ingress(unit)
    npt.assert_allclose(vgg_in[0, 0, 0], [-103.939, -116.779, -123.68], atol=1e-4)

    eff_in = efficientnet_b0.ingress(unit)
    npt.assert_allclose(
        eff_in[0, 0, 0], [-0.485 / 0.229, -0.456 / 0.224, -0.406 / 0.225], atol=1e-5
    )


# --- weight sources --------------------------------------------------------------


def test_checkpoint_weight_source_roundtrip(tmp_path):
    arch = architecture_for(BackboneId.VGG16)
    reference = build_backbone(BackboneId.VGG16, "random:21")
    path = tmp_path / "vgg16.npz"
    save_arrays(
        path, reference.weights,
        {"backbone_id": "VGG16", "layer_order": layer_order(BackboneId.VGG16)},
    )
    loaded = build_backbone(BackboneId.VGG16, str(path))
    rng = np.random.default_rng(2)
    x = rng.uniform(0, 1, size=(1, 224, 224, 3)).astype(np.float32)
    npt.assert_array_equal(loaded.extract(x), reference.extract(x))


def test_checkpoint_weight_source_errors(tmp_path):
    with pytest.raises(WeightArchiveMissingError):
        build_backbone(BackboneId.VGG16, str(tmp_path / "absent.npz"))

    wrong_id = tmp_path / "wrong.npz"
    reference = build_backbone(BackboneId.VGG16, "random:1")
    save_arrays(wrong_id, reference.weights, {"backbone_id": "ResNet50V2"})
    with pytest.raises(WeightArchiveMissingError):
        build_backbone(BackboneId.VGG16, str(wrong_id))

    bad_shape = tmp_path / "badshape.npz"
    corrupted = dict(reference.weights)
    corrupted["block1_conv1/kernel"] = corrupted["block1_conv1/kernel"][:, :, :, :32]
    save_arrays(bad_shape, corrupted, {"backbone_id": "VGG16"})
    with pytest.raises(ShapeMismatchError):
        build_backbone(BackboneId.VGG16, str(bad_shape))


def test_checkpoint_ingress_override(tmp_path):
    reference = build_backbone(BackboneId.RESNET50V2, "random:2")
    path = tmp_path / "resnet.npz"
    save_arrays(
        path, reference.weights,
        {
            "backbone_id": "ResNet50V2",
            "ingress": {"scale": [2.0, 2.0, 2.0], "offset": [-1.0, -1.0, -1.0]},
        },
    )
    loaded = build_backbone(BackboneId.RESNET50V2, str(path))
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, size=(1, 224, 224, 3)).astype(np.float32)
    # the stored affine equals the architecture default here, so results match
    npt.assert_allclose(loaded.extract(x), reference.extract(x), atol=1e-5)


# --- stub -------------------------------------------------------------------------


def test_stub_projection_determinism_and_shape():
    a = build_backbone("StubBackbone", "stub", stub_feature_dim=16, stub_seed=3,
                       stub_input_shape=(8, 8, 3))
    b = build_backbone("StubBackbone", "stub", stub_feature_dim=16, stub_seed=3,
                       stub_input_shape=(8, 8, 3))
    rng = np.random.default_rng(4)
    x = rng.uniform(0, 1, size=(3, 8, 8, 3))
    fa, fb = a.extract(x), b.extract(x)
    assert fa.shape == (3, 16)
    npt.assert_array_equal(fa, fb)

    different = build_backbone("StubBackbone", "stub", stub_feature_dim=16, stub_seed=4,
                               stub_input_shape=(8, 8, 3))
    assert not np.array_equal(different.extract(x), fa)


def test_stub_identity_mode():
    backbone = build_backbone("StubBackbone", "stub", stub_mode="identity",
                              stub_input_shape=(1, 2, 3))
    assert backbone.feature_dim == 6
    x = np.arange(12, dtype=np.float64).reshape(2, 1, 2, 3) / 12.0
    npt.assert_array_equal(backbone.extract(x), x.reshape(2, 6))


def test_stub_requires_stub_source_and_vice_versa():
    with pytest.raises(UnknownBackboneError):
        build_backbone("StubBackbone", "random:1")
    with pytest.raises(UnknownBackboneError):
        build_backbone("VGG16", "stub")


# --- published-weights golden trace ------------------------------------------------

GOLDEN_PREFIX = Path(__file__).parent / "goldens" / "vgg16_zero"
WEIGHTS_ENV = "RETINO_BENCH_VGG16_WEIGHTS"


def test_vgg16_zero_image_matches_golden_trace():
    """Pooled features of the all-black image vs a trace recorded from the
    published pretrained model in its native toolchain (see
    ``retino_bench.backbones.convert.record_golden``). Runs only when both
    the golden file and a converted weight archive are available."""
    weights_path = os.environ.get(WEIGHTS_ENV, "")
    if not GOLDEN_PREFIX.with_suffix(".json").exists() or not weights_path:
        pytest.skip(
            f"needs {GOLDEN_PREFIX}.json/.bin and {WEIGHTS_ENV}=<converted vgg16.npz>"
        )
    from retino_bench.checkpoint import load_golden

    golden, header = load_golden(GOLDEN_PREFIX)
    assert header["backbone_id"] == "VGG16"
    backbone = build_backbone(BackboneId.VGG16, weights_path)
    feats = backbone.extract(np.zeros((1, 224, 224, 3), dtype=np.float32))[0]
    tolerance = 1e-4 * np.maximum(np.abs(golden), 1.0)
    assert np.all(np.abs(feats - golden) <= tolerance)
