"""Frozen pretrained feature extractors and their registry.

Three convolutional architectures are executed natively on numpy from
weights held in the portable named-array container; a stub projection
covers desk-scale testing. All backbones are frozen: extraction is a pure
function of (weights, input), so repeated calls are bit-identical.

Weight sources, given as strings:

* ``"stub"`` -- the seeded random projection (StubBackbone only);
* ``"random:<seed>"`` -- seeded random weights of the correct shapes, for
  architecture-level tests without a weight archive;
* any other value -- path to a portable checkpoint ``.npz`` produced by the
  conversion script (see :mod:`retino_bench.backbones.convert`).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from types import ModuleType

import numpy as np

from ..checkpoint import load_arrays
from ..errors import (
    BackboneUnavailableError,
    ShapeMismatchError,
    UnknownBackboneError,
    WeightArchiveMissingError,
)
from . import efficientnet_b0, resnet50v2, vgg16
from .stub import StubProjection


class BackboneId(enum.Enum):
    VGG16 = "VGG16"
    RESNET50V2 = "ResNet50V2"
    EFFICIENTNET_B0 = "EfficientNetB0"
    STUB = "StubBackbone"

    @classmethod
    def parse(cls, text: str) -> "BackboneId":
        for member in cls:
            if member.value == text:
                return member
        raise UnknownBackboneError(text)


_ARCHITECTURES: dict[BackboneId, ModuleType] = {
    BackboneId.VGG16: vgg16,
    BackboneId.RESNET50V2: resnet50v2,
    BackboneId.EFFICIENTNET_B0: efficientnet_b0,
}

# Inference memory stays bounded by running the conv stack in small chunks.
_CHUNK = 4


@dataclass(frozen=True)
class BackboneSpec:
    id: BackboneId
    input_shape: tuple[int, int, int]
    feature_dim: int
    weight_source: str
    frozen: bool = True


class Backbone:
    """Runtime feature extractor: ingress hook + frozen forward + pooling.

    The ingress hook maps the pipeline's unit-domain [0,1] images to the
    convention the backbone's published weights expect. A converted weight
    archive may carry its own per-channel affine, which then replaces the
    architecture default.
    """

    def __init__(self, spec: BackboneSpec, weights: dict[str, np.ndarray] | None,
                 stub: StubProjection | None = None,
                 ingress_override: tuple[np.ndarray, np.ndarray] | None = None):
        self.spec = spec
        self.weights = weights
        self._stub = stub
        self._ingress_override = ingress_override

    @property
    def feature_dim(self) -> int:
        return self.spec.feature_dim

    @property
    def stub_mode(self) -> str | None:
        return self._stub.mode if self._stub is not None else None

    def _ingress(self, chunk: np.ndarray) -> np.ndarray:
        if self._ingress_override is not None:
            scale, offset = self._ingress_override
            return chunk * scale + offset
        return _ARCHITECTURES[self.spec.id].ingress(chunk)

    def extract(self, batch_unit: np.ndarray) -> np.ndarray:
        """Unit-domain NHWC batch to (N, feature_dim) float64 vectors."""
        if batch_unit.ndim != 4 or batch_unit.shape[3] != 3:
            raise ShapeMismatchError(f"expected NHWC batch, got {batch_unit.shape}")
        if self._stub is not None:
            feats = self._stub.extract(batch_unit)
            if feats.shape[1] != self.spec.feature_dim:
                raise ShapeMismatchError(
                    f"stub produced width {feats.shape[1]}, spec says {self.spec.feature_dim}"
                )
            return feats
        arch = _ARCHITECTURES[self.spec.id]
        expected = self.spec.input_shape
        if tuple(batch_unit.shape[1:]) != expected:
            raise ShapeMismatchError(
                f"{self.spec.id.value} expects {expected}, got {tuple(batch_unit.shape[1:])}"
            )
        outputs = []
        for start in range(0, batch_unit.shape[0], _CHUNK):
            chunk = batch_unit[start : start + _CHUNK].astype(np.float32)
            fmap = arch.forward(self._ingress(chunk), self.weights)
            outputs.append(fmap.mean(axis=(1, 2)))
        return np.concatenate(outputs, axis=0).astype(np.float64)

    def terminal_map(self, batch_unit: np.ndarray) -> np.ndarray:
        """Feature map before global pooling (architecture backbones only)."""
        if self._stub is not None:
            raise BackboneUnavailableError("stub backbone has no spatial feature map")
        arch = _ARCHITECTURES[self.spec.id]
        chunk = batch_unit.astype(np.float32)
        return arch.forward(self._ingress(chunk), self.weights)


def architecture_for(backbone_id: BackboneId) -> ModuleType:
    if backbone_id not in _ARCHITECTURES:
        raise UnknownBackboneError(backbone_id.value)
    return _ARCHITECTURES[backbone_id]


def layer_order(backbone_id: BackboneId) -> list[str]:
    return list(architecture_for(backbone_id).param_shapes().keys())


def _random_weights(backbone_id: BackboneId, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng([seed, 0xB0])
    weights = {}
    for name, shape in architecture_for(backbone_id).param_shapes().items():
        if name.endswith("/moving_variance"):
            arr = rng.uniform(0.5, 1.5, size=shape)
        elif name.endswith("/gamma"):
            arr = rng.uniform(0.5, 1.5, size=shape)
        else:
            arr = rng.standard_normal(shape) * 0.05
        weights[name] = arr.astype(np.float32)
    return weights


def _checkpoint_weights(
    backbone_id: BackboneId, path: str
) -> tuple[dict[str, np.ndarray], tuple[np.ndarray, np.ndarray] | None]:
    p = Path(path)
    if not p.exists():
        raise WeightArchiveMissingError(str(p))
    arrays, manifest = load_arrays(p)
    stored_id = manifest.get("backbone_id")
    if stored_id != backbone_id.value:
        raise WeightArchiveMissingError(
            f"{p} holds weights for {stored_id!r}, not {backbone_id.value!r}"
        )
    expected = architecture_for(backbone_id).param_shapes()
    for name, shape in expected.items():
        if name not in arrays:
            raise ShapeMismatchError("missing array", layer=name)
        if tuple(arrays[name].shape) != shape:
            raise ShapeMismatchError(
                f"expected {shape}, got {tuple(arrays[name].shape)}", layer=name
            )
    ingress = None
    if "ingress" in manifest:
        ingress = (
            np.asarray(manifest["ingress"]["scale"], dtype=np.float32),
            np.asarray(manifest["ingress"]["offset"], dtype=np.float32),
        )
    return {name: arrays[name].astype(np.float32) for name in expected}, ingress


def build_backbone(
    backbone_id: BackboneId | str,
    weight_source: str = "stub",
    stub_feature_dim: int = 64,
    stub_seed: int = 0,
    stub_mode: str = "projection",
    stub_input_shape: tuple[int, int, int] = (224, 224, 3),
) -> Backbone:
    """Construct a frozen backbone from one of the three weight sources."""
    if isinstance(backbone_id, str):
        backbone_id = BackboneId.parse(backbone_id)

    if backbone_id is BackboneId.STUB:
        if weight_source != "stub":
            raise UnknownBackboneError(f"StubBackbone requires weight_source 'stub', got {weight_source!r}")
        if stub_mode == "identity":
            h, w, c = stub_input_shape
            stub_feature_dim = h * w * c
        stub = StubProjection(stub_feature_dim, stub_seed, stub_mode)
        spec = BackboneSpec(backbone_id, stub_input_shape, stub_feature_dim, "stub")
        return Backbone(spec, weights=None, stub=stub)

    arch = architecture_for(backbone_id)
    if weight_source == "stub":
        raise UnknownBackboneError(
            f"weight_source 'stub' is only valid for StubBackbone, not {backbone_id.value}"
        )
    ingress = None
    if weight_source.startswith("random"):
        seed = int(weight_source.split(":", 1)[1]) if ":" in weight_source else 0
        weights = _random_weights(backbone_id, seed)
    else:
        weights, ingress = _checkpoint_weights(backbone_id, weight_source)
    spec = BackboneSpec(backbone_id, arch.INPUT_SHAPE, arch.FEATURE_DIM, weight_source)
    return Backbone(spec, weights=weights, ingress_override=ingress)
