"""Published benchmark numbers shipped with the package.

``reference_metrics.csv`` is a machine-readable copy of the per-class
performance summary reported by the original study for the three backbones
(values as printed, 2-decimal precision). It serves as a consistency target
for the metric definitions and as the layout example for emitted tables.
"""

from __future__ import annotations

from importlib import resources

from .metrics import read_metrics_csv

REFERENCE_MODELS = ("VGG16", "EfficientNetB0", "ResNet50V2")


def load_reference_metrics() -> dict[str, dict[str, dict[str, float]]]:
    """model -> metric -> class name -> reported value."""
    ref = resources.files("retino_bench").joinpath("data/reference_metrics.csv")
    with resources.as_file(ref) as path:
        return read_metrics_csv(path)
