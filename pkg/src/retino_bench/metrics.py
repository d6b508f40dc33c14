"""Per-class evaluation suite: confusion matrix, one-vs-rest metric rows,
ROC curves with trapezoidal AUC, and the serialized metric table.

Every metric is a plain ratio of confusion-matrix counts; a 0/0 ratio is
reported as 0.0 with the metric name recorded in the row's ``undefined``
set, so serialized tables never contain NaN.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import CLASS_NAMES
from .errors import (
    DegenerateClassError,
    EmptyLabelsError,
    LengthMismatchError,
)

METRIC_NAMES = ("TPR", "TNR", "PPV", "NPV", "FPR", "FNR", "FDR", "ACC")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray
    class_names: tuple[str, ...] = CLASS_NAMES

    def __post_init__(self):
        k = len(self.class_names)
        if self.counts.shape != (k, k):
            raise ValueError(f"expected {(k, k)} counts, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise ValueError("negative counts")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def support(self, class_index: int) -> int:
        return int(self.counts[class_index].sum())


def confusion_matrix(true_labels, predicted_labels, class_names: tuple[str, ...] = CLASS_NAMES) -> ConfusionMatrix:
    true_idx = [int(t) for t in true_labels]
    pred_idx = [int(p) for p in predicted_labels]
    if len(true_idx) != len(pred_idx):
        raise LengthMismatchError(f"{len(true_idx)} true vs {len(pred_idx)} predicted labels")
    if not true_idx:
        raise EmptyLabelsError("no samples to tally")
    k = len(class_names)
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (true_idx, pred_idx), 1)
    return ConfusionMatrix(counts, class_names)


def one_vs_rest_counts(cm: ConfusionMatrix, class_index: int) -> tuple[int, int, int, int]:
    """(TP, FP, FN, TN) for the given class treated as positive."""
    k = len(cm.class_names)
    if not 0 <= class_index < k:
        raise IndexError(f"class index {class_index} out of range 0..{k - 1}")
    tp = int(cm.counts[class_index, class_index])
    fn = int(cm.counts[class_index].sum()) - tp
    fp = int(cm.counts[:, class_index].sum()) - tp
    tn = cm.total - tp - fp - fn
    return tp, fp, fn, tn


@dataclass(frozen=True)
class ClassMetricsRow:
    tpr: float
    tnr: float
    ppv: float
    npv: float
    fpr: float
    fnr: float
    fdr: float
    acc: float
    undefined: frozenset[str] = frozenset()

    def value(self, metric: str) -> float:
        return getattr(self, metric.lower())

    def as_dict(self) -> dict[str, float]:
        return {name: self.value(name) for name in METRIC_NAMES}


def _ratio(numerator: int, denominator: int, name: str, undefined: set[str]) -> float:
    if denominator == 0:
        undefined.add(name)
        return 0.0
    return numerator / denominator


def class_metrics(cm: ConfusionMatrix, class_index: int) -> ClassMetricsRow:
    tp, fp, fn, tn = one_vs_rest_counts(cm, class_index)
    undefined: set[str] = set()
    return ClassMetricsRow(
        tpr=_ratio(tp, tp + fn, "TPR", undefined),
        tnr=_ratio(tn, tn + fp, "TNR", undefined),
        ppv=_ratio(tp, tp + fp, "PPV", undefined),
        npv=_ratio(tn, tn + fn, "NPV", undefined),
        fpr=_ratio(fp, fp + tn, "FPR", undefined),
        fnr=_ratio(fn, fn + tp, "FNR", undefined),
        fdr=_ratio(fp, fp + tp, "FDR", undefined),
        acc=_ratio(tp + tn, cm.total, "ACC", undefined),
        undefined=frozenset(undefined),
    )


def overall_accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EmptyLabelsError("empty confusion matrix")
    return float(np.trace(cm.counts)) / cm.total


@dataclass(frozen=True)
class RocCurve:
    """One-vs-rest operating points ordered from threshold +inf downward."""

    points: tuple[tuple[float, float], ...]  # (FPR, TPR)
    thresholds: tuple[float, ...]
    auc: float


def roc_curve(scores: np.ndarray, true_labels, class_index: int) -> RocCurve:
    """ROC over the class's softmax score column.

    Thresholds are the unique observed scores in descending order with a
    leading +inf sentinel; a sample is predicted positive when its score is
    >= the threshold. AUC is the trapezoidal area under the points.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray([int(t) for t in true_labels])
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise LengthMismatchError(f"scores {scores.shape} vs {labels.shape[0]} labels")
    positives = labels == class_index
    n_pos = int(positives.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateClassError(
            f"class {class_index} has {n_pos} positives and {n_neg} negatives"
        )

    class_scores = scores[:, class_index]
    order = np.argsort(-class_scores, kind="stable")
    sorted_scores = class_scores[order]
    sorted_pos = positives[order]

    tps = np.cumsum(sorted_pos)
    fps = np.cumsum(~sorted_pos)
    # keep the last sample of every tied-score run
    distinct = np.nonzero(np.diff(sorted_scores, append=np.nan))[0]

    thresholds = [float("inf")]
    points = [(0.0, 0.0)]
    for idx in distinct:
        thresholds.append(float(sorted_scores[idx]))
        points.append((fps[idx] / n_neg, tps[idx] / n_pos))

    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    auc = float(np.sum(np.diff(xs) * (ys[1:] + ys[:-1]) / 2.0))
    return RocCurve(tuple(points), tuple(thresholds), auc)


@dataclass(frozen=True)
class MetricsTable:
    """Per-class metric rows in canonical class order plus unweighted macro
    means (a reporting addition, not part of the published table layout)."""

    rows: tuple[ClassMetricsRow, ...]
    class_names: tuple[str, ...] = CLASS_NAMES
    macro: dict[str, float] = field(default_factory=dict)

    def cell(self, metric: str, class_index: int) -> float:
        return self.rows[class_index].value(metric)


def metrics_table(cm: ConfusionMatrix) -> MetricsTable:
    rows = tuple(class_metrics(cm, c) for c in range(len(cm.class_names)))
    macro = {
        name: float(np.mean([row.value(name) for row in rows])) for name in METRIC_NAMES
    }
    return MetricsTable(rows, cm.class_names, macro)


# --- serialization -----------------------------------------------------------

CSV_HEADER = ["model", "metric", *CLASS_NAMES]


def write_metrics_csv(tables: dict[str, MetricsTable], path: str | Path) -> None:
    """Human-readable table, one section per model, values at 2 decimals."""
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_HEADER)
        for model_name, table in tables.items():
            for metric in METRIC_NAMES:
                writer.writerow(
                    [model_name, metric]
                    + [f"{table.cell(metric, c):.2f}" for c in range(len(table.class_names))]
                )


def read_metrics_csv(path: str | Path) -> dict[str, dict[str, dict[str, float]]]:
    """model -> metric -> class name -> value."""
    out: dict[str, dict[str, dict[str, float]]] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        class_names = header[2:]
        for row in reader:
            if not row:
                continue
            model, metric = row[0], row[1]
            out.setdefault(model, {})[metric] = {
                name: float(value) for name, value in zip(class_names, row[2:])
            }
    return out


def metrics_to_json_dict(table: MetricsTable) -> dict:
    """Full-precision representation including undefined-metric flags."""
    return {
        "class_names": list(table.class_names),
        "classes": {
            name: {
                "values": table.rows[c].as_dict(),
                "undefined": sorted(table.rows[c].undefined),
            }
            for c, name in enumerate(table.class_names)
        },
        "macro_avg": dict(table.macro),
    }


def write_metrics_json(tables: dict[str, MetricsTable], path: str | Path) -> None:
    payload = {model: metrics_to_json_dict(table) for model, table in tables.items()}
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def roc_to_json_dict(curve: RocCurve | None) -> dict | None:
    """ROC serialized as parallel (threshold, fpr, tpr) triples; ``None``
    marks a degenerate class whose curve is undefined."""
    if curve is None:
        return None
    return {
        "auc": curve.auc,
        "points": [
            [threshold, fpr, tpr]
            for threshold, (fpr, tpr) in zip(curve.thresholds, curve.points)
        ],
    }


def confusion_to_json_dict(cm: ConfusionMatrix) -> dict:
    return {"class_names": list(cm.class_names), "counts": cm.counts.tolist()}


def confusion_from_json_dict(payload: dict) -> ConfusionMatrix:
    return ConfusionMatrix(
        np.asarray(payload["counts"], dtype=np.int64), tuple(payload["class_names"])
    )
