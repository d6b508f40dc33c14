"""Portable named-array container and golden feature-vector files.

A container is a single ``.npz`` file holding arrays keyed by layer name
plus one reserved ``__manifest__`` entry carrying a JSON metadata blob
(backbone id, canonical layer order, arbitrary extras). The same container
format backs both converted backbone weights and training checkpoints.

Golden feature files pair a raw row-major float32 binary with a JSON header
describing shape, dtype, and provenance; they hold reference activations
recorded from an external toolchain for cross-implementation checks.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CorruptCheckpointError

MANIFEST_KEY = "__manifest__"


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray], manifest: dict) -> None:
    if MANIFEST_KEY in arrays:
        raise ValueError(f"{MANIFEST_KEY!r} is a reserved array name")
    blob = np.frombuffer(
        json.dumps(manifest, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    payload = {MANIFEST_KEY: blob}
    payload.update(arrays)
    with open(path, "wb") as handle:
        np.savez(handle, **payload)


def load_arrays(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    try:
        with np.load(path) as archive:
            keys = list(archive.keys())
            if MANIFEST_KEY not in keys:
                raise CorruptCheckpointError(f"{path}: missing container manifest")
            manifest = json.loads(bytes(archive[MANIFEST_KEY]).decode("utf-8"))
            arrays = {k: archive[k] for k in keys if k != MANIFEST_KEY}
    except CorruptCheckpointError:
        raise
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"{path}: {exc}") from exc
    if not isinstance(manifest, dict):
        raise CorruptCheckpointError(f"{path}: manifest is not a JSON object")
    return arrays, manifest


def save_golden(path_prefix: str | Path, vector: np.ndarray, header: dict) -> None:
    """Write ``<prefix>.bin`` (float32, row-major) and ``<prefix>.json``."""
    prefix = Path(path_prefix)
    data = np.ascontiguousarray(vector, dtype=np.float32)
    full_header = dict(header)
    full_header.update({"shape": list(data.shape), "dtype": "float32"})
    prefix.with_suffix(".bin").write_bytes(data.tobytes())
    prefix.with_suffix(".json").write_text(
        json.dumps(full_header, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_golden(path_prefix: str | Path) -> tuple[np.ndarray, dict]:
    prefix = Path(path_prefix)
    header = json.loads(prefix.with_suffix(".json").read_text(encoding="utf-8"))
    raw = prefix.with_suffix(".bin").read_bytes()
    vector = np.frombuffer(raw, dtype=np.float32).reshape(header["shape"])
    return vector, header
