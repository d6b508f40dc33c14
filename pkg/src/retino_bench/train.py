"""Training loop: epochs over frozen-backbone features, Adam updates on the
dense head, per-epoch train/validation metrics, and checkpointing.

Every random decision (mini-batch order, augmentation draws) is derived
from ``(config.seed, purpose, epoch, index)`` rather than a shared stream,
so a run resumed from a checkpoint at epoch k replays epochs k+1..N exactly
as the uninterrupted run would.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint as container
from .backbones import BackboneId
from .dataset import DatasetManifest, GradeLabel
from .errors import (
    BackboneMismatchError,
    CorruptCheckpointError,
    EmptySplitError,
    NonFiniteLossError,
)
from .model import (
    ClassifierModel,
    HeadSpec,
    build_model,
    categorical_cross_entropy,
    head_backward,
    head_forward,
    one_hot,
)
from .optim import AdamState, PlateauScheduler, adam_step, scheduler_update
from .preprocess import AugmentationPolicy, load_image, normalize, resize, augment

# seed-derivation purposes
_OFFLINE_AUG = 1
_ONLINE_AUG = 2
_BATCH_ORDER = 3


def derive_seed(*parts: int) -> int:
    """Stable scalar seed from a tuple of integers."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


@dataclass
class TrainConfig:
    epochs: int = 15
    batch_size: int | None = None  # None = the whole split in a single batch
    seed: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    scheduler_factor: float = 0.5
    scheduler_patience: int = 2
    scheduler_min_delta: float = 1e-4
    scheduler_min_lr: float = 1e-6
    augmentation: AugmentationPolicy | None = None
    augment_online: bool = True
    offline_copies: int = 1
    feature_cache: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("mini-batch size must be >= 1")
        if self.offline_copies < 0:
            raise ValueError("offline_copies must be >= 0")


@dataclass(frozen=True)
class EpochRecord:
    epoch_index: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float
    learning_rate_after: float


@dataclass(frozen=True)
class TrainingHistory:
    """Per-epoch records, contiguous; a full run numbers epochs from 1, a
    resumed segment from wherever it picked up."""

    records: tuple[EpochRecord, ...]

    def __post_init__(self):
        if not self.records:
            return
        first = self.records[0].epoch_index
        if first < 1:
            raise ValueError("epoch indices start at 1")
        for i, rec in enumerate(self.records):
            if rec.epoch_index != first + i:
                raise ValueError("epoch indices must be contiguous")

    def __len__(self) -> int:
        return len(self.records)


def _load_unit_images(manifest: DatasetManifest, input_shape: tuple[int, int, int]) -> np.ndarray:
    h, w = input_shape[:2]
    arrays = []
    for rec in manifest.records:
        img = normalize(resize(load_image(rec.image_path), h, w))
        arrays.append(img.data)
    return np.stack(arrays, axis=0)


def _labels(manifest: DatasetManifest) -> np.ndarray:
    return np.asarray([rec.label.value for rec in manifest.records], dtype=np.int64)


def _evaluate_features(model: ClassifierModel, features: np.ndarray,
                       targets: np.ndarray, label_idx: np.ndarray) -> tuple[float, float]:
    probs, _ = head_forward(model, features)
    loss = categorical_cross_entropy(probs, targets)
    accuracy = float(np.mean(np.argmax(probs, axis=1) == label_idx))
    return loss, accuracy


def evaluate_epoch(model: ClassifierModel, split: DatasetManifest) -> tuple[float, float]:
    """Mean cross-entropy and accuracy over a split; mutates nothing."""
    if len(split) == 0:
        raise EmptySplitError("cannot evaluate an empty split")
    images = _load_unit_images(split, model.backbone.spec.input_shape)
    label_idx = _labels(split)
    features = model.backbone.extract(images)
    return _evaluate_features(model, features, one_hot(label_idx), label_idx)


def _augment_batch(images: np.ndarray, labels: np.ndarray, policy: AugmentationPolicy,
                   seeds: list[int]) -> np.ndarray:
    from .preprocess import ImageTensor, ValueDomain

    out = np.empty_like(images)
    for i in range(images.shape[0]):
        tensor = ImageTensor(images[i], ValueDomain.UNIT_0_1)
        augmented, _ = augment(tensor, GradeLabel(int(labels[i])), policy, seeds[i])
        out[i] = augmented.data
    return out


def train(
    model: ClassifierModel,
    train_split: DatasetManifest,
    val_split: DatasetManifest,
    config: TrainConfig,
    optimizer_state: AdamState | None = None,
    scheduler: PlateauScheduler | None = None,
    start_epoch: int = 0,
    checkpoint_dir: str | Path | None = None,
) -> tuple[ClassifierModel, TrainingHistory]:
    """Run epochs ``start_epoch+1 .. config.epochs``.

    Full-batch mode performs exactly one Adam step per epoch. A non-finite
    training loss aborts the run after writing a diagnostic checkpoint (when
    ``checkpoint_dir`` is given).
    """
    if config.epochs == 0 or start_epoch >= config.epochs:
        return model, TrainingHistory(())
    if len(train_split) == 0:
        raise EmptySplitError("training split is empty")
    if len(val_split) == 0:
        raise EmptySplitError("validation split is empty")

    if optimizer_state is None:
        optimizer_state = AdamState.initialize(
            model.params, alpha=config.alpha, beta1=config.beta1,
            beta2=config.beta2, epsilon=config.epsilon,
        )
    if scheduler is None:
        scheduler = PlateauScheduler(
            factor=config.scheduler_factor,
            patience=config.scheduler_patience,
            min_delta=config.scheduler_min_delta,
            min_lr=config.scheduler_min_lr,
        )

    input_shape = model.backbone.spec.input_shape
    train_images = _load_unit_images(train_split, input_shape)
    train_label_idx = _labels(train_split)

    policy = config.augmentation
    augmenting = policy is not None and not policy.is_identity()

    if augmenting and not config.augment_online and config.offline_copies > 0:
        # expand the corpus once before training; the feature cache then
        # holds for every epoch
        extra_images = []
        extra_labels = []
        for k in range(1, config.offline_copies + 1):
            seeds = [
                derive_seed(config.seed, _OFFLINE_AUG, i, k)
                for i in range(train_images.shape[0])
            ]
            extra_images.append(_augment_batch(train_images, train_label_idx, policy, seeds))
            extra_labels.append(train_label_idx)
        train_images = np.concatenate([train_images, *extra_images], axis=0)
        train_label_idx = np.concatenate([train_label_idx, *extra_labels], axis=0)

    train_targets = one_hot(train_label_idx)
    n_train = train_images.shape[0]

    online = augmenting and config.augment_online
    cache_features = config.feature_cache and not online
    cached_train_features = (
        model.backbone.extract(train_images) if cache_features else None
    )

    val_images = _load_unit_images(val_split, input_shape)
    val_label_idx = _labels(val_split)
    val_targets = one_hot(val_label_idx)
    val_features = model.backbone.extract(val_images)

    records = []
    for epoch in range(start_epoch + 1, config.epochs + 1):
        if online:
            seeds = [derive_seed(config.seed, _ONLINE_AUG, epoch, i) for i in range(n_train)]
            epoch_images = _augment_batch(train_images, train_label_idx, policy, seeds)
            features = model.backbone.extract(epoch_images)
        elif cached_train_features is not None:
            features = cached_train_features
        else:
            features = model.backbone.extract(train_images)

        if config.batch_size is None:
            order = np.arange(n_train)
            bounds = [(0, n_train)]
        else:
            rng = np.random.default_rng(derive_seed(config.seed, _BATCH_ORDER, epoch))
            order = rng.permutation(n_train)
            bounds = [
                (start, min(start + config.batch_size, n_train))
                for start in range(0, n_train, config.batch_size)
            ]

        loss_sum = 0.0
        correct = 0
        for start, stop in bounds:
            idx = order[start:stop]
            probs, cache = head_forward(model, features[idx])
            loss = categorical_cross_entropy(probs, train_targets[idx])
            if not np.isfinite(loss):
                if checkpoint_dir is not None:
                    save_checkpoint(
                        model, optimizer_state, epoch,
                        Path(checkpoint_dir) / f"diagnostic_epoch{epoch}.npz",
                        scheduler=scheduler,
                    )
                raise NonFiniteLossError(epoch, loss)
            grads = head_backward(model, cache, train_targets[idx])
            model.params, optimizer_state = adam_step(model.params, grads, optimizer_state)
            loss_sum += loss * len(idx)
            correct += int(np.sum(np.argmax(probs, axis=1) == train_label_idx[idx]))

        train_loss = loss_sum / n_train
        train_acc = correct / n_train
        val_loss, val_acc = _evaluate_features(model, val_features, val_targets, val_label_idx)
        new_lr = scheduler_update(scheduler, val_acc, optimizer_state.alpha)
        optimizer_state.alpha = new_lr
        records.append(
            EpochRecord(epoch, train_loss, train_acc, val_loss, val_acc, new_lr)
        )

    return model, TrainingHistory(tuple(records))


# --- checkpointing ----------------------------------------------------------


def save_checkpoint(
    model: ClassifierModel,
    optimizer_state: AdamState,
    epoch: int,
    path: str | Path,
    scheduler: PlateauScheduler | None = None,
    config_hash: str = "",
) -> None:
    """Named-array container (head weights + Adam moments) plus a JSON
    sidecar carrying epoch, backbone identity, and scalar state."""
    path = Path(path)
    arrays: dict[str, np.ndarray] = {}
    for name, value in model.params.items():
        arrays[name] = value
    for name, value in optimizer_state.m.items():
        arrays[f"adam/m/{name}"] = value
    for name, value in optimizer_state.v.items():
        arrays[f"adam/v/{name}"] = value

    spec = model.backbone.spec
    manifest = {
        "kind": "training-checkpoint",
        "backbone_id": spec.id.value,
        "layer_order": list(arrays.keys()),
    }
    container.save_arrays(path, arrays, manifest)

    sidecar = {
        "epoch": int(epoch),
        "config_hash": config_hash,
        "backbone_id": spec.id.value,
        "weight_source": spec.weight_source,
        "stub": {
            "feature_dim": spec.feature_dim,
            "mode": model.backbone.stub_mode,
            "input_shape": list(spec.input_shape),
        },
        "head_widths": list(model.head_spec.layer_widths),
        "init_seed": model.init_seed,
        "adam": {
            "alpha": optimizer_state.alpha,
            "beta1": optimizer_state.beta1,
            "beta2": optimizer_state.beta2,
            "epsilon": optimizer_state.epsilon,
            "t": optimizer_state.t,
        },
        "scheduler": scheduler.state_dict() if scheduler is not None else None,
    }
    import json

    path.with_suffix(".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_checkpoint(
    path: str | Path, expected_backbone_id: BackboneId | str | None = None
) -> tuple[ClassifierModel, AdamState, PlateauScheduler | None, int]:
    import json

    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not path.exists() or not sidecar_path.exists():
        raise CorruptCheckpointError(f"missing checkpoint file(s) at {path}")
    try:
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptCheckpointError(f"{sidecar_path}: {exc}") from exc
    arrays, manifest = container.load_arrays(path)

    stored_id = sidecar.get("backbone_id")
    if manifest.get("backbone_id") != stored_id:
        raise CorruptCheckpointError("sidecar and container disagree on the backbone")
    if expected_backbone_id is not None:
        expected = (
            expected_backbone_id.value
            if isinstance(expected_backbone_id, BackboneId)
            else expected_backbone_id
        )
        if stored_id != expected:
            raise BackboneMismatchError(f"checkpoint holds {stored_id!r}, expected {expected!r}")

    try:
        stub_info = sidecar["stub"]
        model = build_model(
            stored_id,
            HeadSpec(tuple(sidecar["head_widths"])),
            weight_source=sidecar["weight_source"],
            init_seed=sidecar["init_seed"],
            stub_feature_dim=stub_info["feature_dim"],
            stub_mode=stub_info["mode"] or "projection",
            stub_input_shape=tuple(stub_info["input_shape"]),
        )
        for name in model.param_names():
            stored = arrays[name]
            if stored.shape != model.params[name].shape:
                raise CorruptCheckpointError(f"{name}: shape {stored.shape} does not fit the head")
            model.params[name] = stored.astype(np.float64)
        adam = sidecar["adam"]
        state = AdamState(
            alpha=adam["alpha"], beta1=adam["beta1"], beta2=adam["beta2"],
            epsilon=adam["epsilon"], t=adam["t"],
            m={name: arrays[f"adam/m/{name}"].astype(np.float64) for name in model.param_names()},
            v={name: arrays[f"adam/v/{name}"].astype(np.float64) for name in model.param_names()},
        )
        scheduler = (
            PlateauScheduler.from_state_dict(sidecar["scheduler"])
            if sidecar.get("scheduler") is not None
            else None
        )
        epoch = int(sidecar["epoch"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpointError(f"{path}: {exc}") from exc
    return model, state, scheduler, epoch


# --- history persistence ------------------------------------------------------

HISTORY_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr"]


def write_history_csv(history: TrainingHistory, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(HISTORY_HEADER)
        for rec in history.records:
            writer.writerow([
                rec.epoch_index,
                repr(rec.train_loss),
                repr(rec.train_accuracy),
                repr(rec.val_loss),
                repr(rec.val_accuracy),
                repr(rec.learning_rate_after),
            ])


def read_history_csv(path: str | Path) -> TrainingHistory:
    records = []
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        next(reader)
        for row in reader:
            if not row:
                continue
            records.append(EpochRecord(
                int(row[0]), float(row[1]), float(row[2]),
                float(row[3]), float(row[4]), float(row[5]),
            ))
    return TrainingHistory(tuple(records))
