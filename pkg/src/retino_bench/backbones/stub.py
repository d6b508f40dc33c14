"""Desk-scale stand-in backbone: a seeded, frozen random projection.

``projection`` mode multiplies the flattened image by a fixed Gaussian
matrix determined entirely by (seed, input size, feature_dim); ``identity``
mode passes the flattened image through unchanged, which lets tests feed
hand-constructed feature vectors encoded as tiny images.
"""

from __future__ import annotations

import numpy as np


class StubProjection:
    def __init__(self, feature_dim: int = 64, seed: int = 0, mode: str = "projection"):
        if mode not in ("projection", "identity"):
            raise ValueError(f"unknown stub mode {mode!r}")
        if mode == "projection" and feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        self.feature_dim = feature_dim
        self.seed = seed
        self.mode = mode
        self._matrices: dict[int, np.ndarray] = {}

    def _matrix(self, in_size: int) -> np.ndarray:
        cached = self._matrices.get(in_size)
        if cached is None:
            rng = np.random.default_rng([self.seed, in_size, self.feature_dim])
            cached = rng.standard_normal((in_size, self.feature_dim)) / np.sqrt(in_size)
            self._matrices[in_size] = cached
        return cached

    def extract(self, batch_unit: np.ndarray) -> np.ndarray:
        flat = batch_unit.reshape(batch_unit.shape[0], -1).astype(np.float64)
        if self.mode == "identity":
            return flat
        return flat @ self._matrix(flat.shape[1])
