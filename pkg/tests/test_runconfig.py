"""Config file parsing, override precedence, and typed conversion."""

import pytest

from forcesense.errors import ConfigError
from forcesense.runconfig import (build_config, config_echo, intrinsics,
                                  model_config, read_config_file, scene_config,
                                  train_config)


def test_read_config_file_basics(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(
        "# a comment line\n"
        "seed = 7\n"
        "dataset_dir = data/run1   # trailing comment\n"
        "\n"
        "tcn_channels = 96,64,32\n")
    vals = read_config_file(p)
    assert vals == {"seed": "7", "dataset_dir": "data/run1",
                    "tcn_channels": "96,64,32"}


def test_read_config_file_rejects_duplicates(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("seed = 1\nseed = 2\n")
    with pytest.raises(ConfigError) as exc:
        read_config_file(p)
    assert "seed" in str(exc.value)


def test_read_config_file_rejects_garbage_line(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("seed 7\n")
    with pytest.raises(ConfigError) as exc:
        read_config_file(p)
    assert ":1:" in str(exc.value)


def test_read_config_file_missing(tmp_path):
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "absent.cfg")


def test_build_config_defaults_and_types():
    cfg = build_config("train", {"seed": "3", "dataset_dir": "d"}, {})
    assert cfg["seed"] == 3
    assert cfg["epochs"] == 50
    assert cfg["batch_size"] == 32
    assert cfg["base_lr"] == 1e-3
    assert cfg["variant"] == "rpc_tcn"
    assert cfg["tcn_channels"] == (96, 64, 32)
    assert cfg["resume"] is False
    assert cfg["checkpoint"] == "model.ckpt"


def test_build_config_overrides_win():
    cfg = build_config("train", {"seed": "3", "dataset_dir": "d",
                                 "epochs": "10"}, {"epochs": "20"})
    assert cfg["epochs"] == 20


def test_build_config_unknown_key():
    with pytest.raises(ConfigError) as exc:
        build_config("train", {"seed": "1", "dataset_dir": "d"},
                     {"warmup": "5"})
    assert "warmup" in str(exc.value)


def test_build_config_missing_required_names_key():
    with pytest.raises(ConfigError) as exc:
        build_config("train", {"dataset_dir": "d"}, {})
    assert "seed" in str(exc.value)
    with pytest.raises(ConfigError) as exc:
        build_config("gen-data", {"seed": "1"}, {})
    assert "dataset_dir" in str(exc.value)


def test_build_config_bad_value_mentions_key():
    with pytest.raises(ConfigError) as exc:
        build_config("train", {"seed": "abc", "dataset_dir": "d"}, {})
    assert "seed" in str(exc.value)


def test_build_config_parses_bools_and_tuples():
    cfg = build_config("train", {"seed": "1", "dataset_dir": "d"},
                       {"resume": "true", "tcn_channels": "8,8",
                        "rgb_hw": "16,16"})
    assert cfg["resume"] is True
    assert cfg["tcn_channels"] == (8, 8)
    assert cfg["rgb_hw"] == (16, 16)
    with pytest.raises(ConfigError):
        build_config("train", {"seed": "1", "dataset_dir": "d"},
                     {"resume": "maybe"})


def test_plot_command_needs_no_seed():
    cfg = build_config("plot", {}, {})
    assert cfg["history_csv"]
    assert cfg["loss_svg"]


def test_config_echo_stable_and_readable():
    cfg = build_config("train", {"seed": "1", "dataset_dir": "d"}, {})
    echo = config_echo(cfg)
    assert list(echo) == sorted(echo)
    assert echo["tcn_channels"] == "96,64,32"
    assert echo["resume"] == "false"
    echo2 = config_echo(build_config("train",
                                     {"seed": "1", "dataset_dir": "d"}, {}))
    assert echo == echo2


def test_typed_converters():
    cfg = build_config("train", {"seed": "4", "dataset_dir": "d"}, {})
    mc = model_config(cfg)
    assert mc.variant == "rpc_tcn" and mc.n == 7
    tc = train_config(cfg, deterministic=True)
    assert tc.deterministic is True and tc.epochs == 50
    intr = intrinsics(cfg)
    assert intr.fx == 80.0 and intr.cx == 7.5
    sc = scene_config(build_config("gen-data",
                                   {"seed": "4", "dataset_dir": "d"}, {}))
    assert sc.seed == 4
    assert sc.fps == 30.0


def test_model_config_bad_hw_rejected():
    cfg = build_config("train", {"seed": "1", "dataset_dir": "d"},
                       {"rgb_hw": "16,16,16"})
    with pytest.raises(ConfigError):
        model_config(cfg)
