"""Classifier model: frozen backbone + trainable 4-layer dense head.

The head computes ReLU(x W_i + b_i) for the first three layers and a
softmax over the 5 grade logits in the last; training minimizes mean
categorical cross-entropy. Forward, loss, and backward are implemented
exactly (float64), with the backward pass returning analytic gradients that
are verified against finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backbones import Backbone, BackboneId, build_backbone
from .dataset import GradeLabel, NUM_CLASSES
from .errors import NotOneHotError, ShapeMismatchError, StaleCacheError
from .preprocess import ImageTensor, ValueDomain

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class HeadSpec:
    """Widths of the four trainable dense layers; the last is the class count."""

    layer_widths: tuple[int, ...] = (256, 128, 128, 5)

    def __post_init__(self):
        if len(self.layer_widths) != 4:
            raise ValueError(f"head must have exactly 4 layers, got {len(self.layer_widths)}")
        if self.layer_widths[-1] != NUM_CLASSES:
            raise ValueError(
                f"last layer width must equal the class count {NUM_CLASSES}, "
                f"got {self.layer_widths[-1]}"
            )
        if any(w < 1 for w in self.layer_widths):
            raise ValueError("layer widths must be positive")


@dataclass
class ClassifierModel:
    backbone: Backbone
    head_spec: HeadSpec
    params: dict[str, np.ndarray]
    init_seed: int
    num_classes: int = NUM_CLASSES

    @property
    def feature_dim(self) -> int:
        return self.backbone.feature_dim

    def param_names(self) -> list[str]:
        return [f"head/{part}{i}" for i in range(1, 5) for part in ("w", "b")]


def _init_head(feature_dim: int, head_spec: HeadSpec, init_seed: int) -> dict[str, np.ndarray]:
    """Seeded uniform fan-based initialization, zero biases."""
    rng = np.random.default_rng(init_seed)
    params: dict[str, np.ndarray] = {}
    fan_in = feature_dim
    for i, width in enumerate(head_spec.layer_widths, start=1):
        limit = np.sqrt(6.0 / (fan_in + width))
        params[f"head/w{i}"] = rng.uniform(-limit, limit, size=(fan_in, width))
        params[f"head/b{i}"] = np.zeros(width)
        fan_in = width
    return params


def build_model(
    backbone_id: BackboneId | str,
    head_spec: HeadSpec | None = None,
    weight_source: str = "stub",
    init_seed: int = 0,
    stub_feature_dim: int = 64,
    stub_mode: str = "projection",
    stub_input_shape: tuple[int, int, int] = (224, 224, 3),
) -> ClassifierModel:
    """Assemble a frozen backbone with a freshly initialized trainable head."""
    head_spec = head_spec or HeadSpec()
    backbone = build_backbone(
        backbone_id,
        weight_source,
        stub_feature_dim=stub_feature_dim,
        stub_seed=init_seed,
        stub_mode=stub_mode,
        stub_input_shape=stub_input_shape,
    )
    params = _init_head(backbone.feature_dim, head_spec, init_seed)
    return ClassifierModel(backbone, head_spec, params, init_seed)


def _as_batch(images) -> np.ndarray:
    if isinstance(images, np.ndarray):
        batch = images
    else:
        arrays = []
        for img in images:
            if isinstance(img, ImageTensor):
                if img.value_domain is not ValueDomain.UNIT_0_1:
                    raise ValueError("images must be normalized to the unit domain")
                arrays.append(img.data)
            else:
                arrays.append(np.asarray(img))
        batch = np.stack(arrays, axis=0)
    if batch.ndim == 3:
        batch = batch[None]
    return batch


def extract_features(model: ClassifierModel, images) -> np.ndarray:
    """Run the frozen backbone over a batch of unit-domain images."""
    return model.backbone.extract(_as_batch(images))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)


def head_forward(model: ClassifierModel, features: np.ndarray) -> tuple[np.ndarray, dict]:
    """Forward pass through the dense head.

    Returns class probabilities and an activations cache for
    :func:`head_backward`. The cache is bound to the exact parameter arrays
    used, so a stale cache (parameters updated in between) is detected.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != model.feature_dim:
        raise ShapeMismatchError(
            f"expected features of width {model.feature_dim}, got {features.shape}"
        )
    x = features
    inputs = [x]
    preacts = []
    for i in range(1, 4):
        z = x @ model.params[f"head/w{i}"] + model.params[f"head/b{i}"]
        preacts.append(z)
        x = np.maximum(z, 0.0)
        inputs.append(x)
    logits = x @ model.params["head/w4"] + model.params["head/b4"]
    preacts.append(logits)
    probs = softmax(logits)
    cache = {
        "inputs": inputs,
        "preacts": preacts,
        "probs": probs,
        "param_refs": {name: model.params[name] for name in model.param_names()},
    }
    return probs, cache


def _check_one_hot(targets: np.ndarray, num_classes: int) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 2 or targets.shape[1] != num_classes:
        raise ShapeMismatchError(f"targets must be (batch, {num_classes}), got {targets.shape}")
    is_binary = np.all((targets == 0.0) | (targets == 1.0))
    if not is_binary or not np.all(targets.sum(axis=1) == 1.0):
        raise NotOneHotError("targets must be one-hot rows")
    return targets


def categorical_cross_entropy(probabilities: np.ndarray, targets: np.ndarray) -> float:
    """Mean of -ln(p_true), with probabilities floored at 1e-12."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    if probabilities.ndim != 2:
        raise ShapeMismatchError(f"probabilities must be 2-d, got {probabilities.shape}")
    targets = _check_one_hot(targets, probabilities.shape[1])
    if probabilities.shape != targets.shape:
        raise ShapeMismatchError(
            f"probabilities {probabilities.shape} vs targets {targets.shape}"
        )
    p_true = (probabilities * targets).sum(axis=1)
    p_true = np.clip(p_true, PROB_FLOOR, 1.0)
    return float(np.mean(-np.log(p_true)))


def head_backward(model: ClassifierModel, cache: dict, targets: np.ndarray) -> dict[str, np.ndarray]:
    """Analytic gradients of the mean cross-entropy w.r.t. head parameters."""
    for name, ref in cache.get("param_refs", {}).items():
        if model.params.get(name) is not ref:
            raise StaleCacheError(f"cache was built against different parameters ({name})")
    probs = cache["probs"]
    targets = _check_one_hot(targets, probs.shape[1])
    if targets.shape != probs.shape:
        raise ShapeMismatchError(f"targets {targets.shape} vs probabilities {probs.shape}")
    batch = probs.shape[0]
    grads: dict[str, np.ndarray] = {}

    delta = (probs - targets) / batch
    for i in range(4, 0, -1):
        x_in = cache["inputs"][i - 1]
        grads[f"head/w{i}"] = x_in.T @ delta
        grads[f"head/b{i}"] = delta.sum(axis=0)
        if i > 1:
            delta = delta @ model.params[f"head/w{i}"].T
            delta = delta * (cache["preacts"][i - 2] > 0.0)
    return grads


def argmax_labels(probabilities: np.ndarray) -> list[GradeLabel]:
    """Highest-probability label per row; ties go to the lowest class index."""
    return [GradeLabel(int(i)) for i in np.argmax(probabilities, axis=1)]


def predict(model: ClassifierModel, images) -> tuple[np.ndarray, list[GradeLabel]]:
    features = extract_features(model, images)
    probs, _ = head_forward(model, features)
    return probs, argmax_labels(probs)


def predict_from_features(model: ClassifierModel, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    probs, _ = head_forward(model, features)
    return probs, np.argmax(probs, axis=1)


def one_hot(labels, num_classes: int = NUM_CLASSES) -> np.ndarray:
    indices = np.asarray([int(label) for label in labels], dtype=np.int64)
    out = np.zeros((len(indices), num_classes))
    out[np.arange(len(indices)), indices] = 1.0
    return out
