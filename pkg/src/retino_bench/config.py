"""Run configuration files: flat INI-style sections, strictly parsed.

Every key has a documented default; any unknown section or key aborts
before side effects so a typo can never silently change an experiment. The
parsed text is also the provenance record: its hash goes into the run id.

Sections and defaults::

    [dataset]
    manifest =                  ; path to CSV or class-folder tree (required)
    format = csv                ; csv | directory-tree
    train_fraction = 0.8
    split_seed = 7

    [preprocessing]
    augment = true
    augment_online = true
    offline_copies = 1
    rotation_max_deg = 15
    shear_max = 0.1
    crop_fraction = 0.9
    hflip_probability = 0.5

    [model]
    backbone = StubBackbone     ; VGG16 | ResNet50V2 | EfficientNetB0 | StubBackbone
    weight_source = stub        ; stub | random[:seed] | path to .npz
    head_widths = 256,128,128,5
    init_seed = 0
    stub_feature_dim = 64
    stub_mode = projection      ; projection | identity
    stub_input_size = 224

    [optimizer]
    alpha = 0.001
    beta1 = 0.9
    beta2 = 0.999
    epsilon = 1e-8

    [scheduler]
    factor = 0.5
    patience = 2
    min_delta = 0.0001
    min_lr = 1e-6

    [training]
    epochs = 15
    batch_mode = full-batch     ; full-batch | mini-batch:<size>
    seed = 0
    feature_cache = true

    [output]
    runs_dir = runs             ; overridden by $RETINO_BENCH_RUNS_DIR
    split_csv = split.csv
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import UsageError
from .preprocess import AugmentationPolicy
from .train import TrainConfig

RUNS_DIR_ENV = "RETINO_BENCH_RUNS_DIR"


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_batch_mode(text: str) -> int | None:
    text = text.strip()
    if text == "full-batch":
        return None
    if text.startswith("mini-batch:"):
        size = int(text.split(":", 1)[1])
        if size < 1:
            raise ValueError("mini-batch size must be >= 1")
        return size
    raise ValueError(f"batch_mode must be 'full-batch' or 'mini-batch:<size>', got {text!r}")


def _parse_widths(text: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in text.split(","))


# section -> key -> (parser, default text); a default of None marks a key
# that is required only by the commands that read it.
SCHEMA: dict[str, dict[str, tuple]] = {
    "dataset": {
        "manifest": (str, None),
        "format": (str, "csv"),
        "train_fraction": (float, "0.8"),
        "split_seed": (int, "7"),
    },
    "preprocessing": {
        "augment": (_parse_bool, "true"),
        "augment_online": (_parse_bool, "true"),
        "offline_copies": (int, "1"),
        "rotation_max_deg": (float, "15"),
        "shear_max": (float, "0.1"),
        "crop_fraction": (float, "0.9"),
        "hflip_probability": (float, "0.5"),
    },
    "model": {
        "backbone": (str, "StubBackbone"),
        "weight_source": (str, "stub"),
        "head_widths": (_parse_widths, "256,128,128,5"),
        "init_seed": (int, "0"),
        "stub_feature_dim": (int, "64"),
        "stub_mode": (str, "projection"),
        "stub_input_size": (int, "224"),
    },
    "optimizer": {
        "alpha": (float, "0.001"),
        "beta1": (float, "0.9"),
        "beta2": (float, "0.999"),
        "epsilon": (float, "1e-8"),
    },
    "scheduler": {
        "factor": (float, "0.5"),
        "patience": (int, "2"),
        "min_delta": (float, "0.0001"),
        "min_lr": (float, "1e-6"),
    },
    "training": {
        "epochs": (int, "15"),
        "batch_mode": (_parse_batch_mode, "full-batch"),
        "seed": (int, "0"),
        "feature_cache": (_parse_bool, "true"),
    },
    "output": {
        "runs_dir": (str, "runs"),
        "split_csv": (str, "split.csv"),
    },
}


@dataclass
class RunConfig:
    values: dict[str, dict[str, object]]
    source_text: str = ""
    source_path: str = ""

    def get(self, section: str, key: str):
        return self.values[section][key]

    # -- derived artifacts ----------------------------------------------

    def manifest_path(self) -> Path:
        manifest = self.get("dataset", "manifest")
        if not manifest:
            raise UsageError("[dataset] manifest is required")
        return Path(str(manifest))

    def augmentation_policy(self) -> AugmentationPolicy | None:
        if not self.get("preprocessing", "augment"):
            return None
        return AugmentationPolicy(
            rotation_max_deg=self.get("preprocessing", "rotation_max_deg"),
            shear_max=self.get("preprocessing", "shear_max"),
            crop_fraction=self.get("preprocessing", "crop_fraction"),
            hflip_probability=self.get("preprocessing", "hflip_probability"),
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.get("training", "epochs"),
            batch_size=self.get("training", "batch_mode"),
            seed=self.get("training", "seed"),
            alpha=self.get("optimizer", "alpha"),
            beta1=self.get("optimizer", "beta1"),
            beta2=self.get("optimizer", "beta2"),
            epsilon=self.get("optimizer", "epsilon"),
            scheduler_factor=self.get("scheduler", "factor"),
            scheduler_patience=self.get("scheduler", "patience"),
            scheduler_min_delta=self.get("scheduler", "min_delta"),
            scheduler_min_lr=self.get("scheduler", "min_lr"),
            augmentation=self.augmentation_policy(),
            augment_online=self.get("preprocessing", "augment_online"),
            offline_copies=self.get("preprocessing", "offline_copies"),
            feature_cache=self.get("training", "feature_cache"),
        )

    def runs_dir(self) -> Path:
        override = os.environ.get(RUNS_DIR_ENV)
        return Path(override) if override else Path(str(self.get("output", "runs_dir")))

    def provenance_text(self) -> str:
        """Canonical serialization of the effective values, for hashing."""
        lines = []
        for section in sorted(self.values):
            for key in sorted(self.values[section]):
                lines.append(f"{section}.{key}={self.values[section][key]!r}")
        return "\n".join(lines)


def _apply_schema(parser: configparser.ConfigParser, source: str) -> dict:
    unknown_sections = set(parser.sections()) - set(SCHEMA)
    if unknown_sections:
        raise UsageError(f"{source}: unknown config section(s) {sorted(unknown_sections)}")
    values: dict[str, dict[str, object]] = {}
    for section, keys in SCHEMA.items():
        present = dict(parser.items(section)) if parser.has_section(section) else {}
        unknown_keys = set(present) - set(keys)
        if unknown_keys:
            raise UsageError(f"{source}: unknown key(s) {sorted(unknown_keys)} in [{section}]")
        values[section] = {}
        for key, (parse, default) in keys.items():
            raw = present.get(key, default)
            if raw is None:
                values[section][key] = ""
                continue
            try:
                values[section][key] = parse(raw)
            except (ValueError, TypeError) as exc:
                raise UsageError(f"{source}: bad value for [{section}] {key}: {exc}") from exc
    return values


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from exc
    values = _apply_schema(parser, str(path))
    return RunConfig(values, source_text=text, source_path=str(path))


def default_config() -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    return RunConfig(_apply_schema(parser, "<defaults>"))


def apply_overrides(config: RunConfig, seed: int | None = None,
                    epochs: int | None = None, backbone: str | None = None) -> RunConfig:
    """Flag overrides; only these three knobs may bypass the config file."""
    if seed is not None:
        config.values["training"]["seed"] = seed
    if epochs is not None:
        if epochs < 0:
            raise UsageError("--epochs must be >= 0")
        config.values["training"]["epochs"] = epochs
    if backbone is not None:
        config.values["model"]["backbone"] = backbone
    return config
