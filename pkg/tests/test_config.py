import pytest

from retino_bench.config import RUNS_DIR_ENV, apply_overrides, default_config, load_config
from retino_bench.errors import UsageError


def write_config(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text, encoding="utf-8")
    return path


def test_defaults():
    config = default_config()
    assert config.get("training", "epochs") == 15
    assert config.get("training", "batch_mode") is None  # full batch
    assert config.get("dataset", "train_fraction") == 0.8
    assert config.get("model", "backbone") == "StubBackbone"
    assert config.get("model", "head_widths") == (256, 128, 128, 5)
    assert config.get("optimizer", "alpha") == 0.001
    assert config.get("scheduler", "factor") == 0.5


def test_partial_file_fills_defaults(tmp_path):
    path = write_config(tmp_path, "[training]\nepochs = 3\n")
    config = load_config(path)
    assert config.get("training", "epochs") == 3
    assert config.get("optimizer", "alpha") == 0.001


def test_unknown_section_rejected(tmp_path):
    path = write_config(tmp_path, "[trainnig]\nepochs = 3\n")
    with pytest.raises(UsageError):
        load_config(path)


def test_unknown_key_rejected(tmp_path):
    path = write_config(tmp_path, "[training]\nepoch = 3\n")
    with pytest.raises(UsageError):
        load_config(path)


def test_bad_value_rejected(tmp_path):
    path = write_config(tmp_path, "[training]\nepochs = fifteen\n")
    with pytest.raises(UsageError):
        load_config(path)
    path = write_config(tmp_path, "[training]\nbatch_mode = sometimes\n")
    with pytest.raises(UsageError):
        load_config(path)


def test_batch_mode_parsing(tmp_path):
    path = write_config(tmp_path, "[training]\nbatch_mode = mini-batch:16\n")
    assert load_config(path).get("training", "batch_mode") == 16


def test_missing_config_file(tmp_path):
    with pytest.raises(UsageError):
        load_config(tmp_path / "absent.cfg")


def test_overrides(tmp_path):
    path = write_config(tmp_path, "[training]\nepochs = 3\nseed = 1\n")
    config = apply_overrides(load_config(path), seed=9, epochs=7, backbone="VGG16")
    assert config.get("training", "seed") == 9
    assert config.get("training", "epochs") == 7
    assert config.get("model", "backbone") == "VGG16"
    with pytest.raises(UsageError):
        apply_overrides(config, epochs=-1)


def test_manifest_required(tmp_path):
    config = load_config(write_config(tmp_path, "[training]\nepochs = 1\n"))
    with pytest.raises(UsageError):
        config.manifest_path()


def test_runs_dir_env_override(tmp_path, monkeypatch):
    config = default_config()
    assert str(config.runs_dir()) == "runs"
    monkeypatch.setenv(RUNS_DIR_ENV, str(tmp_path / "elsewhere"))
    assert config.runs_dir() == tmp_path / "elsewhere"


def test_provenance_text_covers_every_key():
    config = default_config()
    text = config.provenance_text()
    assert "training.epochs=15" in text
    assert "optimizer.alpha=0.001" in text
    config.values["training"]["epochs"] = 7
    assert "training.epochs=7" in config.provenance_text()


def test_augmentation_policy_toggle(tmp_path):
    config = load_config(write_config(tmp_path, "[preprocessing]\naugment = false\n"))
    assert config.augmentation_policy() is None
    config = load_config(write_config(tmp_path, "[preprocessing]\nrotation_max_deg = 5\n"))
    policy = config.augmentation_policy()
    assert policy is not None and policy.rotation_max_deg == 5.0


def test_train_config_assembly(tmp_path):
    text = """
[training]
epochs = 4
batch_mode = mini-batch:8
seed = 5

[optimizer]
alpha = 0.01

[scheduler]
patience = 3
"""
    config = load_config(write_config(tmp_path, text))
    tc = config.train_config()
    assert tc.epochs == 4
    assert tc.batch_size == 8
    assert tc.seed == 5
    assert tc.alpha == 0.01
    assert tc.scheduler_patience == 3
