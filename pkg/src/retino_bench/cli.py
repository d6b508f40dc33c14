"""Command-line surface: split, train, evaluate, compare.

Each command is driven by a single declarative config file (see
:mod:`retino_bench.config`); ``--seed``, ``--epochs``, and ``--backbone``
may override their config keys. Exit codes: 0 success, 1 usage error,
2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import RunConfig, apply_overrides, load_config
from .dataset import (
    CLASS_NAMES,
    DatasetManifest,
    Split,
    load_manifest,
    stratified_split,
    write_split_csv,
)
from .errors import (
    DataError,
    EmptySplitError,
    NumericError,
    RetinoBenchError,
    UsageError,
)
from .metrics import (
    confusion_matrix,
    metrics_table,
    overall_accuracy,
    roc_curve,
)
from .errors import DegenerateClassError
from .model import HeadSpec, build_model, predict_from_features
from .optim import AdamState, PlateauScheduler
from .report import ExperimentRecord, compare_runs, emit_metrics_bundle, emit_report, load_record, make_run_id
from .train import _load_unit_images, load_checkpoint, save_checkpoint, train


def _split_manifest(config: RunConfig) -> DatasetManifest:
    manifest = load_manifest(config.manifest_path(), config.get("dataset", "format"))
    if all(rec.split is Split.UNASSIGNED for rec in manifest.records):
        manifest = stratified_split(
            manifest,
            train_fraction=config.get("dataset", "train_fraction"),
            seed=config.get("dataset", "split_seed"),
        )
    return manifest


def _build_model_from_config(config: RunConfig):
    stub_size = config.get("model", "stub_input_size")
    return build_model(
        config.get("model", "backbone"),
        HeadSpec(tuple(config.get("model", "head_widths"))),
        weight_source=config.get("model", "weight_source"),
        init_seed=config.get("model", "init_seed"),
        stub_feature_dim=config.get("model", "stub_feature_dim"),
        stub_mode=config.get("model", "stub_mode"),
        stub_input_shape=(stub_size, stub_size, 3),
    )


def _evaluation_artifacts(model, split: DatasetManifest):
    if len(split) == 0:
        raise EmptySplitError("evaluation split is empty")
    images = _load_unit_images(split, model.backbone.spec.input_shape)
    features = model.backbone.extract(images)
    probs, pred_idx = predict_from_features(model, features)
    true_idx = [rec.label.value for rec in split.records]
    cm = confusion_matrix(true_idx, pred_idx)
    table = metrics_table(cm)
    curves = {}
    for class_index, name in enumerate(CLASS_NAMES):
        try:
            curves[name] = roc_curve(probs, true_idx, class_index)
        except DegenerateClassError:
            curves[name] = None
    return cm, table, curves, overall_accuracy(cm)


def cmd_split(config: RunConfig, out: str | None = None) -> int:
    manifest = _split_manifest(config)
    out_path = Path(out) if out else Path(str(config.get("output", "split_csv")))
    write_split_csv(manifest, out_path)
    train_n = len(manifest.subset(Split.TRAIN))
    val_n = len(manifest.subset(Split.VALIDATION))
    print(f"wrote {out_path} ({train_n} train / {val_n} validation)")
    return 0


def cmd_train(config: RunConfig) -> int:
    manifest = _split_manifest(config)
    train_view = manifest.subset(Split.TRAIN)
    val_view = manifest.subset(Split.VALIDATION)

    model = _build_model_from_config(config)
    train_config = config.train_config()

    run_id = make_run_id(config.provenance_text(), manifest.fingerprint())
    runs_dir = config.runs_dir()
    started = datetime.now(timezone.utc).isoformat()

    optimizer_state = AdamState.initialize(
        model.params, alpha=train_config.alpha, beta1=train_config.beta1,
        beta2=train_config.beta2, epsilon=train_config.epsilon,
    )
    scheduler = PlateauScheduler(
        factor=train_config.scheduler_factor,
        patience=train_config.scheduler_patience,
        min_delta=train_config.scheduler_min_delta,
        min_lr=train_config.scheduler_min_lr,
    )
    model, history = train(
        model, train_view, val_view, train_config,
        optimizer_state=optimizer_state, scheduler=scheduler,
    )
    cm, table, curves, overall = _evaluation_artifacts(model, val_view)

    record = ExperimentRecord(
        run_id=run_id,
        model_name=config.get("model", "backbone"),
        config={
            section: {k: _jsonable(v) for k, v in keys.items()}
            for section, keys in config.values.items()
        },
        history=history,
        confusion=cm,
        metrics=table,
        roc=curves,
        overall_accuracy=overall,
        dataset_fingerprint=manifest.fingerprint(),
        timestamps={"started": started, "completed": datetime.now(timezone.utc).isoformat()},
    )
    run_dir = emit_report(record, runs_dir)
    save_checkpoint(
        model,
        optimizer_state,
        len(history),
        run_dir / "checkpoint.npz",
        scheduler=scheduler,
        config_hash=run_id.split("-")[0],
    )
    print(run_dir)
    return 0


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    return value


def cmd_evaluate(config: RunConfig, checkpoint_path: str) -> int:
    model, _, _, epoch = load_checkpoint(
        checkpoint_path, expected_backbone_id=config.get("model", "backbone")
    )
    manifest = _split_manifest(config)
    val_view = manifest.subset(Split.VALIDATION)
    if len(val_view) == 0:
        val_view = manifest
    cm, table, curves, overall = _evaluation_artifacts(model, val_view)
    run_id = make_run_id(config.provenance_text() + f"|eval@{epoch}", manifest.fingerprint())
    out_dir = config.runs_dir() / f"eval-{run_id}"
    emit_metrics_bundle(config.get("model", "backbone"), table, cm, curves, out_dir)
    print(out_dir)
    print(f"overall accuracy: {overall:.4f}")
    return 0


def cmd_compare(run_ids: list[str], runs_dir: Path, out: str | None = None) -> int:
    records = []
    for run_id in run_ids:
        record_path = runs_dir / run_id / "record.json"
        if not record_path.exists():
            raise DataError(f"no record found for run {run_id!r} under {runs_dir}")
        records.append(load_record(record_path))
    out_dir = Path(out) if out else runs_dir / "comparison"
    comparison_path, summary_path = compare_runs(records, out_dir)
    print(comparison_path)
    print(summary_path)
    return 0


def _make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retino-bench",
        description="Transfer-learning benchmark pipeline for retinopathy grading",
        exit_on_error=False,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_arg(p):
        p.add_argument("-c", "--config", required=True, help="run config file")

    p_split = sub.add_parser("split", help="assign train/validation splits", exit_on_error=False)
    add_config_arg(p_split)
    p_split.add_argument("--seed", type=int, default=None, help="override [training] seed")
    p_split.add_argument("--out", default=None, help="override [output] split_csv")

    p_train = sub.add_parser("train", help="train a model and emit a report bundle", exit_on_error=False)
    add_config_arg(p_train)
    p_train.add_argument("--seed", type=int, default=None, help="override [training] seed")
    p_train.add_argument("--epochs", type=int, default=None, help="override [training] epochs")
    p_train.add_argument("--backbone", default=None, help="override [model] backbone")

    p_eval = sub.add_parser("evaluate", help="evaluate a checkpoint", exit_on_error=False)
    add_config_arg(p_eval)
    p_eval.add_argument("--checkpoint", required=True, help="checkpoint .npz path")

    p_cmp = sub.add_parser("compare", help="merge run reports into one table", exit_on_error=False)
    p_cmp.add_argument("run_ids", nargs="+", help="run ids under the runs directory")
    p_cmp.add_argument("--runs-dir", default="runs", help="runs directory root")
    p_cmp.add_argument("--out", default=None, help="output directory for the comparison")
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _make_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except argparse.ArgumentError as exc:
            raise UsageError(str(exc)) from exc

        if args.command == "compare":
            return cmd_compare(args.run_ids, Path(args.runs_dir), args.out)

        config = load_config(args.config)
        if args.command == "split":
            apply_overrides(config, seed=args.seed)
            if args.seed is not None:
                config.values["dataset"]["split_seed"] = args.seed
            return cmd_split(config, args.out)
        if args.command == "train":
            apply_overrides(config, seed=args.seed, epochs=args.epochs, backbone=args.backbone)
            return cmd_train(config)
        if args.command == "evaluate":
            return cmd_evaluate(config, args.checkpoint)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except RetinoBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
