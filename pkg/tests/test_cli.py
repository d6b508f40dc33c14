import csv
from pathlib import Path

import numpy as np
import pytest

from retino_bench.cli import main
from retino_bench.dataset import CLASS_NAMES

from conftest import make_class_tree


def make_config(tmp_path, corpus, runs_dir, epochs=3, extra=""):
    text = f"""
[dataset]
manifest = {corpus}
format = directory-tree
train_fraction = 0.8
split_seed = 7

[model]
backbone = StubBackbone
weight_source = stub
stub_feature_dim = 16
stub_input_size = 16

[training]
epochs = {epochs}
seed = 3

[preprocessing]
augment = true
rotation_max_deg = 5

[output]
runs_dir = {runs_dir}
{extra}
"""
    path = tmp_path / "run.cfg"
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def corpus(tmp_path):
    return make_class_tree(tmp_path / "corpus", per_class=5, size=(16, 16))


def run_dirs(runs_dir: Path):
    return sorted(p for p in runs_dir.iterdir() if p.is_dir() and p.name != "comparison")


def test_cmd_split(tmp_path, corpus, capsys):
    config = make_config(tmp_path, corpus, tmp_path / "runs")
    out_csv = tmp_path / "split.csv"
    assert main(["split", "-c", str(config), "--out", str(out_csv)]) == 0
    rows = list(csv.reader(out_csv.open()))
    assert rows[0] == ["image_path", "label", "split"]
    assert len(rows) == 26
    splits = [row[2] for row in rows[1:]]
    assert splits.count("train") == 20 and splits.count("validation") == 5


def test_cmd_train_produces_bundle(tmp_path, corpus):
    runs = tmp_path / "runs"
    config = make_config(tmp_path, corpus, runs, epochs=15)
    assert main(["train", "-c", str(config)]) == 0
    (run_dir,) = run_dirs(runs)
    history = (run_dir / "history.csv").read_text().splitlines()
    assert len(history) == 16  # header + 15 epochs
    metrics = (run_dir / "metrics.csv").read_text().splitlines()
    assert metrics[0] == "model,metric," + ",".join(CLASS_NAMES)
    assert all((run_dir / name).exists() for name in (
        "record.json", "metrics_full.json", "fig_confusion.png",
        "fig_roc.png", "fig_acc.png", "fig_loss.png", "checkpoint.npz",
    ))


def test_cmd_train_missing_manifest_exits_2_without_run_dir(tmp_path, capsys):
    runs = tmp_path / "runs"
    config = make_config(tmp_path, tmp_path / "nowhere", runs)
    assert main(["train", "-c", str(config)]) == 2
    assert not runs.exists()


def test_unknown_config_key_exits_1_before_side_effects(tmp_path, corpus):
    runs = tmp_path / "runs"
    config = make_config(tmp_path, corpus, runs, extra="[training2]\nx = 1\n")
    assert main(["train", "-c", str(config)]) == 1
    assert not runs.exists()


def test_cli_usage_errors(tmp_path):
    assert main(["train", "-c", str(tmp_path / "absent.cfg")]) == 1
    assert main(["frobnicate"]) == 1


def test_numeric_failure_exit_code(tmp_path, corpus):
    config = make_config(
        tmp_path, corpus, tmp_path / "runs",
        extra="[optimizer]\nalpha = 1e200\n",
    )
    with np.errstate(over="ignore", invalid="ignore"):
        assert main(["train", "-c", str(config)]) == 3


def test_cmd_train_deterministic_outputs(tmp_path, corpus):
    runs_a = tmp_path / "runs_a"
    runs_b = tmp_path / "runs_b"
    config_a = make_config(tmp_path, corpus, runs_a, epochs=4)
    assert main(["train", "-c", str(config_a)]) == 0
    config_b = make_config(tmp_path, corpus, runs_b, epochs=4)
    assert main(["train", "-c", str(config_b)]) == 0

    (dir_a,) = run_dirs(runs_a)
    (dir_b,) = run_dirs(runs_b)
    for name in ("metrics.csv", "history.csv", "metrics_full.json"):
        assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes()


def test_cmd_evaluate_roundtrip(tmp_path, corpus, capsys):
    runs = tmp_path / "runs"
    config = make_config(tmp_path, corpus, runs, epochs=2)
    assert main(["train", "-c", str(config)]) == 0
    (run_dir,) = run_dirs(runs)

    assert main(["evaluate", "-c", str(config),
                 "--checkpoint", str(run_dir / "checkpoint.npz")]) == 0
    eval_dirs = [p for p in runs.iterdir() if p.name.startswith("eval-")]
    assert len(eval_dirs) == 1
    assert (eval_dirs[0] / "metrics.csv").exists()


def test_cmd_evaluate_backbone_mismatch(tmp_path, corpus):
    runs = tmp_path / "runs"
    config = make_config(tmp_path, corpus, runs, epochs=1)
    assert main(["train", "-c", str(config)]) == 0
    (run_dir,) = run_dirs(runs)

    vgg_config = make_config(tmp_path, corpus, runs, epochs=1)
    vgg_text = vgg_config.read_text().replace("backbone = StubBackbone", "backbone = VGG16")
    vgg_config.write_text(vgg_text)
    assert main(["evaluate", "-c", str(vgg_config),
                 "--checkpoint", str(run_dir / "checkpoint.npz")]) == 2


def test_cmd_compare(tmp_path, corpus):
    runs = tmp_path / "runs"
    config = make_config(tmp_path, corpus, runs, epochs=2)
    assert main(["train", "-c", str(config)]) == 0
    assert main(["train", "-c", str(config), "--seed", "99"]) == 0
    ids = [p.name for p in run_dirs(runs)]
    assert len(ids) == 2

    assert main(["compare", *ids, "--runs-dir", str(runs)]) == 0
    comparison = runs / "comparison" / "comparison.csv"
    lines = comparison.read_text().splitlines()
    assert lines[0].startswith("model,metric,")
    assert len(lines) == 1 + 2 * 8

    assert main(["compare", "missing-run", "--runs-dir", str(runs)]) == 2


def test_flag_overrides_change_run(tmp_path, corpus):
    runs = tmp_path / "runs"
    config = make_config(tmp_path, corpus, runs, epochs=2)
    assert main(["train", "-c", str(config), "--epochs", "1"]) == 0
    (run_dir,) = run_dirs(runs)
    assert len((run_dir / "history.csv").read_text().splitlines()) == 2


def test_split_seed_flag_changes_assignment(tmp_path, corpus):
    config = make_config(tmp_path, corpus, tmp_path / "runs")
    out_a = tmp_path / "a.csv"
    out_b = tmp_path / "b.csv"
    out_c = tmp_path / "c.csv"
    assert main(["split", "-c", str(config), "--out", str(out_a)]) == 0
    assert main(["split", "-c", str(config), "--out", str(out_b), "--seed", "123"]) == 0
    assert main(["split", "-c", str(config), "--out", str(out_c)]) == 0
    assert out_a.read_bytes() == out_c.read_bytes()  # config seed unchanged
    assert out_a.read_bytes() != out_b.read_bytes()
