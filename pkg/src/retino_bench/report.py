"""Run reporting: figures, the persisted experiment record, and run
comparison.

Figures are a thin rendering layer over the CSV/JSON sidecars; everything
testable lives in the sidecars, whose bytes are deterministic for identical
inputs. A run directory is guarded by a lock file so two processes cannot
write the same bundle concurrently.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import EmptyHistoryError, IncompleteRecordError, RunDirectoryLockedError
from .metrics import (
    ConfusionMatrix,
    MetricsTable,
    RocCurve,
    confusion_from_json_dict,
    confusion_to_json_dict,
    metrics_to_json_dict,
    roc_to_json_dict,
    write_metrics_csv,
    write_metrics_json,
)
from .train import EpochRecord, TrainingHistory, write_history_csv

BUNDLE_FILES = (
    "record.json",
    "metrics.csv",
    "metrics_full.json",
    "history.csv",
    "fig_confusion.png",
    "fig_roc.png",
    "fig_acc.png",
    "fig_loss.png",
)


@dataclass
class ExperimentRecord:
    run_id: str
    model_name: str
    config: dict
    history: TrainingHistory
    confusion: ConfusionMatrix
    metrics: MetricsTable
    roc: dict[str, RocCurve | None]
    overall_accuracy: float
    dataset_fingerprint: str
    artifact_paths: dict[str, str] = field(default_factory=dict)
    timestamps: dict[str, str] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "model_name": self.model_name,
            "config": self.config,
            "history": [
                {
                    "epoch": r.epoch_index,
                    "train_loss": r.train_loss,
                    "train_accuracy": r.train_accuracy,
                    "val_loss": r.val_loss,
                    "val_accuracy": r.val_accuracy,
                    "learning_rate_after": r.learning_rate_after,
                }
                for r in self.history.records
            ],
            "confusion": confusion_to_json_dict(self.confusion),
            "metrics": metrics_to_json_dict(self.metrics),
            "roc": {name: roc_to_json_dict(curve) for name, curve in self.roc.items()},
            "overall_accuracy": self.overall_accuracy,
            "dataset_fingerprint": self.dataset_fingerprint,
            "artifact_paths": self.artifact_paths,
            "timestamps": self.timestamps,
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "ExperimentRecord":
        from .metrics import ClassMetricsRow

        history = TrainingHistory(tuple(
            EpochRecord(
                h["epoch"], h["train_loss"], h["train_accuracy"],
                h["val_loss"], h["val_accuracy"], h["learning_rate_after"],
            )
            for h in payload["history"]
        ))
        metrics_payload = payload["metrics"]
        class_names = tuple(metrics_payload["class_names"])
        rows = tuple(
            ClassMetricsRow(
                **{k.lower(): v for k, v in metrics_payload["classes"][name]["values"].items()},
                undefined=frozenset(metrics_payload["classes"][name]["undefined"]),
            )
            for name in class_names
        )
        metrics = MetricsTable(rows, class_names, dict(metrics_payload["macro_avg"]))
        roc = {}
        for name, curve in payload["roc"].items():
            if curve is None:
                roc[name] = None
            else:
                roc[name] = RocCurve(
                    points=tuple((p[1], p[2]) for p in curve["points"]),
                    thresholds=tuple(p[0] for p in curve["points"]),
                    auc=curve["auc"],
                )
        return cls(
            run_id=payload["run_id"],
            model_name=payload["model_name"],
            config=payload["config"],
            history=history,
            confusion=confusion_from_json_dict(payload["confusion"]),
            metrics=metrics,
            roc=roc,
            overall_accuracy=payload["overall_accuracy"],
            dataset_fingerprint=payload["dataset_fingerprint"],
            artifact_paths=dict(payload["artifact_paths"]),
            timestamps=dict(payload["timestamps"]),
        )


def make_run_id(config_text: str, dataset_fingerprint: str, now: datetime | None = None) -> str:
    """Content-hash prefix plus a UTC timestamp suffix."""
    digest = hashlib.sha256(
        (config_text + "\x1f" + dataset_fingerprint).encode("utf-8")
    ).hexdigest()[:12]
    stamp = (now or datetime.now(timezone.utc)).strftime("%Y%m%dT%H%M%SZ")
    return f"{digest}-{stamp}"


def save_record(record: ExperimentRecord, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(record.to_json_dict(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def load_record(path: str | Path) -> ExperimentRecord:
    return ExperimentRecord.from_json_dict(
        json.loads(Path(path).read_text(encoding="utf-8"))
    )


@contextlib.contextmanager
def run_lock(run_dir: Path):
    """Exclusive lock file guarding a run directory."""
    run_dir.mkdir(parents=True, exist_ok=True)
    lock_path = run_dir / ".lock"
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RunDirectoryLockedError(
            f"{run_dir} is locked by another process (remove {lock_path} if stale)"
        ) from None
    try:
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(OSError):
            os.unlink(lock_path)


# --- figures ------------------------------------------------------------------


def plot_training_curves(history: TrainingHistory, out_dir: str | Path) -> list[Path]:
    """Accuracy and loss curves (train + validation vs epoch)."""
    if len(history) == 0:
        raise EmptyHistoryError("history has no epochs")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    epochs = [r.epoch_index for r in history.records]
    paths = []
    series = (
        ("fig_acc.png", "Accuracy", "Training and Validation Accuracy",
         [r.train_accuracy for r in history.records],
         [r.val_accuracy for r in history.records]),
        ("fig_loss.png", "Loss", "Training and Validation Loss",
         [r.train_loss for r in history.records],
         [r.val_loss for r in history.records]),
    )
    for filename, ylabel, title, train_series, val_series in series:
        fig, ax = plt.subplots(figsize=(6, 4))
        marker = "o" if len(epochs) == 1 else None
        ax.plot(epochs, train_series, label="train", marker=marker)
        ax.plot(epochs, val_series, label="validation", marker=marker)
        ax.set_xlabel("Epoch")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        path = out_dir / filename
        fig.savefig(path, dpi=100)
        plt.close(fig)
        paths.append(path)
    return paths


def plot_confusion_matrix(cm: ConfusionMatrix, out_path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 5))
    image = ax.imshow(cm.counts, cmap="Blues")
    fig.colorbar(image, ax=ax)
    k = len(cm.class_names)
    ax.set_xticks(range(k), cm.class_names, rotation=45, ha="right")
    ax.set_yticks(range(k), cm.class_names)
    threshold = cm.counts.max() / 2 if cm.total else 0
    for i in range(k):
        for j in range(k):
            ax.text(j, i, str(int(cm.counts[i, j])), ha="center", va="center",
                    color="white" if cm.counts[i, j] > threshold else "black")
    ax.set_xlabel("Predicted")
    ax.set_ylabel("True")
    ax.set_title("Confusion Matrix")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=100)
    plt.close(fig)
    return out_path


def plot_roc(curves: dict[str, RocCurve | None], out_path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 5))
    for name, curve in curves.items():
        if curve is None:
            ax.plot([], [], label=f"{name} (undefined)")
            continue
        xs = [p[0] for p in curve.points]
        ys = [p[1] for p in curve.points]
        ax.plot(xs, ys, label=f"{name} (AUC={curve.auc:.3f})")
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", label="chance")
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_title("One-vs-rest ROC")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=100)
    plt.close(fig)
    return out_path


# --- bundles ------------------------------------------------------------------


def emit_report(record: ExperimentRecord, out_dir: str | Path) -> Path:
    """Write the full bundle for one run; idempotent for identical records."""
    if len(record.history) == 0:
        raise IncompleteRecordError("record has an empty training history")
    if record.confusion.total == 0:
        raise IncompleteRecordError("record has an empty confusion matrix")
    out_dir = Path(out_dir)
    run_dir = out_dir / record.run_id
    with run_lock(run_dir):
        record.artifact_paths = {name: str(run_dir / name) for name in BUNDLE_FILES}
        write_metrics_csv({record.model_name: record.metrics}, run_dir / "metrics.csv")
        write_metrics_json({record.model_name: record.metrics}, run_dir / "metrics_full.json")
        write_history_csv(record.history, run_dir / "history.csv")
        plot_training_curves(record.history, run_dir)
        plot_confusion_matrix(record.confusion, run_dir / "fig_confusion.png")
        plot_roc(record.roc, run_dir / "fig_roc.png")
        save_record(record, run_dir / "record.json")
    return run_dir


def emit_metrics_bundle(
    model_name: str,
    metrics: MetricsTable,
    confusion: ConfusionMatrix,
    roc: dict[str, RocCurve | None],
    out_dir: str | Path,
) -> Path:
    """Evaluation-only bundle (no training history)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv({model_name: metrics}, out_dir / "metrics.csv")
    write_metrics_json({model_name: metrics}, out_dir / "metrics_full.json")
    plot_confusion_matrix(confusion, out_dir / "fig_confusion.png")
    plot_roc(roc, out_dir / "fig_roc.png")
    return out_dir


def compare_runs(records: list[ExperimentRecord], out_dir: str | Path) -> tuple[Path, Path]:
    """Merge per-run metric tables into one sectioned CSV and summarize the
    best run per metric (by unweighted macro mean, ties to the
    lexicographically first run id)."""
    if not records:
        raise IncompleteRecordError("nothing to compare")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    ordered = sorted(records, key=lambda r: r.run_id)
    names = [r.model_name for r in ordered]
    tables = {}
    for rec in ordered:
        label = rec.model_name if names.count(rec.model_name) == 1 else f"{rec.model_name}:{rec.run_id}"
        tables[label] = rec.metrics
    comparison_path = out_dir / "comparison.csv"
    write_metrics_csv(tables, comparison_path)

    fingerprints = {rec.run_id: rec.dataset_fingerprint for rec in ordered}
    if len(set(fingerprints.values())) > 1:
        # cross-dataset comparisons are legal but must be visible
        (out_dir / "WARNING_fingerprints.txt").write_text(
            "compared runs were evaluated on different datasets:\n"
            + "".join(f"{rid}: {fp}\n" for rid, fp in fingerprints.items()),
            encoding="utf-8",
        )

    from .metrics import METRIC_NAMES

    summary_path = out_dir / "best_models.csv"
    import csv as _csv

    with summary_path.open("w", encoding="utf-8", newline="") as handle:
        writer = _csv.writer(handle)
        writer.writerow(["metric", "best_model", "run_id", "macro_avg"])
        for metric in METRIC_NAMES:
            best = max(ordered, key=lambda r: r.metrics.macro[metric])
            writer.writerow([
                metric, best.model_name, best.run_id, repr(best.metrics.macro[metric]),
            ])
    return comparison_path, summary_path
