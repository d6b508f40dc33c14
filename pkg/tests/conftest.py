from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from retino_bench.dataset import CLASS_NAMES, DatasetManifest, GradeLabel, ImageRecord, Split


def write_png(path: Path, array: np.ndarray) -> Path:
    """array: HxWx3 uint8."""
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array, mode="RGB").save(path)
    return path


def make_class_tree(root: Path, per_class: int = 2, size: tuple[int, int] = (8, 8),
                    seed: int = 0) -> Path:
    """Directory-tree corpus: one folder per class name, random PNG images."""
    rng = np.random.default_rng(seed)
    for name in CLASS_NAMES:
        for i in range(per_class):
            pixels = rng.integers(0, 256, size=(*size, 3), dtype=np.uint8)
            write_png(root / name / f"img{i}.png", pixels)
    return root


def make_balanced_manifest(n_per_class: int, prefix: str = "img") -> DatasetManifest:
    """In-memory manifest without backing files (for split/count tests)."""
    records = []
    for label in GradeLabel:
        for i in range(n_per_class):
            records.append(ImageRecord(f"{prefix}/{label.name}_{i}.png", label))
    return DatasetManifest(tuple(records))


# Cluster centers for the linearly separable 5-class feature set. Features
# live in [0,1]^6 so they survive the PNG round trip (1x2 RGB image = 6
# values, quantized to 1/255).
def synthetic_feature_set(n_per_class: int, noise: float = 0.04, seed: int = 0):
    rng = np.random.default_rng(seed)
    features = []
    labels = []
    for c in range(5):
        center = np.full(6, 0.15)
        center[c] = 0.85
        for _ in range(n_per_class):
            x = center + rng.uniform(-noise, noise, size=6)
            features.append(np.clip(x, 0.0, 1.0))
            labels.append(c)
    return np.asarray(features), np.asarray(labels, dtype=np.int64)


def synthetic_image_dataset(root: Path, n_per_class: int, noise: float = 0.04,
                            seed: int = 0) -> tuple[DatasetManifest, np.ndarray, np.ndarray]:
    """Writes the synthetic features as 1x2 PNGs; returns (manifest,
    quantized unit-domain features, labels)."""
    features, labels = synthetic_feature_set(n_per_class, noise, seed)
    records = []
    quantized = []
    for i, (x, c) in enumerate(zip(features, labels)):
        pixels = np.round(x * 255.0).astype(np.uint8).reshape(1, 2, 3)
        path = write_png(root / f"sample_{i:03d}.png", pixels)
        records.append(ImageRecord(str(path), GradeLabel(int(c)), Split.TRAIN))
        quantized.append(pixels.reshape(-1).astype(np.float64) / 255.0)
    manifest = DatasetManifest(tuple(records))
    return manifest, np.asarray(quantized), labels


@pytest.fixture
def class_tree(tmp_path: Path) -> Path:
    return make_class_tree(tmp_path / "corpus")
