"""Fundus-image manifests: the 5-grade label scheme, CSV and directory-tree
ingestion, and deterministic stratified train/validation splitting.

Manifests are immutable; every operation returns a new manifest, so splits
are reproducible and safe to share across threads.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateFractionError,
    EmptyManifestError,
    MalformedRowError,
    MissingPathError,
    UnknownLabelError,
)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}


class GradeLabel(enum.IntEnum):
    """Retinopathy severity grade.

    Index order is the alphabetical order of the display names, which is the
    column order used throughout the reported metric tables.
    """

    MILD_DR = 0
    MODERATE_DR = 1
    NO_DR = 2
    PROLIFERATE_DR = 3
    SEVERE_DR = 4

    @property
    def display_name(self) -> str:
        return CLASS_NAMES[self.value]

    @classmethod
    def from_display_name(cls, text: str) -> "GradeLabel":
        try:
            return cls(CLASS_NAMES.index(text))
        except ValueError:
            raise UnknownLabelError(text) from None


# Case-sensitive display names; also the folder names for directory-tree
# ingestion and the CSV label vocabulary.
CLASS_NAMES: tuple[str, ...] = (
    "Mild DR",
    "Moderate DR",
    "No DR",
    "Proliferate DR",
    "Severe DR",
)

NUM_CLASSES = len(CLASS_NAMES)


class Split(enum.Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    UNASSIGNED = "unassigned"


@dataclass(frozen=True)
class ImageRecord:
    image_path: str
    label: GradeLabel
    split: Split = Split.UNASSIGNED

    def __post_init__(self):
        if not self.image_path:
            raise ValueError("image_path must be non-empty")


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered collection of labeled image records.

    Record order is the ingestion order and is never reshuffled in place, so
    seeded operations on a manifest are reproducible.
    """

    records: tuple[ImageRecord, ...]
    class_names: tuple[str, ...] = CLASS_NAMES
    source_id: str = ""

    def __post_init__(self):
        for rec in self.records:
            if not 0 <= rec.label.value < len(self.class_names):
                raise ValueError(
                    f"label {rec.label!r} does not index class_names"
                )

    def __len__(self) -> int:
        return len(self.records)

    def subset(self, split: Split) -> "DatasetManifest":
        """View of the records assigned to one split (order preserved)."""
        kept = tuple(r for r in self.records if r.split is split)
        return replace(self, records=kept)

    def fingerprint(self) -> str:
        """Stable hash of the manifest contents (paths, labels, splits)."""
        import hashlib

        h = hashlib.sha256()
        for rec in self.records:
            h.update(
                f"{rec.image_path}\x1f{rec.label.name}\x1f{rec.split.value}\n".encode("utf-8")
            )
        return h.hexdigest()


def load_manifest(path: str | Path, fmt: str = "csv") -> DatasetManifest:
    """Ingest a labeled image manifest.

    ``fmt="csv"``: UTF-8 file with header ``image_path,label`` (an optional
    third ``split`` column, as written by :func:`write_split_csv`, is
    accepted). ``fmt="directory-tree"``: one subdirectory per class display
    name, each holding image files.
    """
    path = Path(path)
    if not path.exists():
        raise MissingPathError(str(path))
    if fmt == "csv":
        manifest = _load_csv(path)
    elif fmt == "directory-tree":
        manifest = _load_directory_tree(path)
    else:
        raise ValueError(f"unknown manifest format {fmt!r}")
    if not manifest.records:
        raise EmptyManifestError(str(path))
    return manifest


def _load_csv(path: Path) -> DatasetManifest:
    records = []
    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["image_path", "label"]:
            raise MalformedRowError(1, "expected header 'image_path,label'")
        has_split = len(header) >= 3 and header[2].strip() == "split"
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2 or (not has_split and len(row) > 2):
                raise MalformedRowError(line_no, f"expected 2 fields, got {len(row)}")
            image_path = row[0].strip()
            if not image_path:
                raise MalformedRowError(line_no, "empty image_path")
            label = GradeLabel.from_display_name(row[1].strip())
            split = Split.UNASSIGNED
            if has_split and len(row) >= 3 and row[2].strip():
                try:
                    split = Split(row[2].strip())
                except ValueError:
                    raise MalformedRowError(line_no, f"bad split value {row[2]!r}") from None
            records.append(ImageRecord(image_path, label, split))
    return DatasetManifest(tuple(records), source_id=str(path))


def _load_directory_tree(root: Path) -> DatasetManifest:
    records = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        label = GradeLabel.from_display_name(sub.name)
        for img in sorted(sub.iterdir()):
            if img.is_file() and img.suffix.lower() in IMAGE_EXTENSIONS:
                records.append(ImageRecord(str(img), label))
    return DatasetManifest(tuple(records), source_id=str(root))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(
    manifest: DatasetManifest, train_fraction: float = 0.8, seed: int = 0
) -> DatasetManifest:
    """Assign every record to train or validation, stratified per class.

    Each class is shuffled independently with a generator seeded by
    ``(seed, class_index)``; the first ``round_half_up(n_c * fraction)``
    records of each class go to train, the rest to validation. Identical
    (manifest, fraction, seed) yields an identical assignment.
    """
    if not manifest.records:
        raise EmptyManifestError("cannot split an empty manifest")
    if not 0.0 < train_fraction < 1.0:
        raise DegenerateFractionError(f"train_fraction must be in (0,1), got {train_fraction}")

    by_class: dict[int, list[int]] = {c: [] for c in range(len(manifest.class_names))}
    for idx, rec in enumerate(manifest.records):
        by_class[rec.label.value].append(idx)

    assignment: dict[int, Split] = {}
    for class_index, indices in by_class.items():
        if not indices:
            continue
        rng = np.random.default_rng([seed, class_index])
        order = rng.permutation(len(indices))
        n_train = _round_half_up(len(indices) * train_fraction)
        for rank, pos in enumerate(order):
            assignment[indices[pos]] = Split.TRAIN if rank < n_train else Split.VALIDATION

    new_records = tuple(
        replace(rec, split=assignment[idx]) for idx, rec in enumerate(manifest.records)
    )
    return replace(manifest, records=new_records)


def class_distribution(
    manifest: DatasetManifest, split: Split | None = None
) -> dict[GradeLabel, int]:
    """Per-class record counts; ``split=None`` counts every record."""
    counts = {label: 0 for label in GradeLabel}
    for rec in manifest.records:
        if split is None or rec.split is split:
            counts[rec.label] += 1
    return counts


def write_split_csv(manifest: DatasetManifest, path: str | Path) -> None:
    """Persist a manifest as CSV with the added ``split`` column."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["image_path", "label", "split"])
        for rec in manifest.records:
            writer.writerow([rec.image_path, rec.label.display_name, rec.split.value])
