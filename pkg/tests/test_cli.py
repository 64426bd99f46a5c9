"""End-to-end command tests through cli.main (exit codes, files, stdout)."""

import subprocess
import sys

import numpy as np
import pytest

from forcesense.cli import main

SCENE = ["--rgb-size", "16", "--depth-size", "8", "--duration-s", "2.5"]
MODEL = ["--rgb-hw", "16,16", "--rgb-channels", "4,8", "--rgb-features", "16",
         "--pc-points", "32", "--pc-mlp", "8,16", "--pc-features", "8",
         "--tcn-channels", "8,8"]
TRAIN = MODEL + ["--epochs", "2", "--batch-size", "8"]


def kv(capsys):
    out = capsys.readouterr().out
    pairs = {}
    for line in out.strip().splitlines():
        k, _, v = line.partition("=")
        pairs[k] = v
    return pairs


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One generated dataset plus one trained checkpoint, shared read-only."""
    root = tmp_path_factory.mktemp("cliwork")
    ds = root / "ds"
    rc = main(["gen-data", "--dataset-dir", str(ds), "--seed", "11"] + SCENE)
    assert rc == 0
    rc = main(["train", "--dataset-dir", str(ds), "--seed", "11",
               "--checkpoint", str(root / "model.ckpt"),
               "--history-csv", str(root / "history.csv"),
               "--deterministic"] + TRAIN)
    assert rc == 0
    return root


def test_gen_data_outputs_and_checksum(tmp_path, capsys):
    ds = tmp_path / "ds"
    rc = main(["gen-data", "--dataset-dir", str(ds), "--seed", "5"] + SCENE)
    assert rc == 0
    first = kv(capsys)
    assert first["frames"] == "75"
    assert len(first["checksum"]) == 16
    # regeneration is byte-identical, so the checksum reprints unchanged
    rc = main(["gen-data", "--dataset-dir", str(ds), "--seed", "5"] + SCENE)
    assert rc == 0
    assert kv(capsys)["checksum"] == first["checksum"]


def test_train_outputs(workdir, capsys):
    hist = (workdir / "history.csv").read_text().splitlines()
    data = [l for l in hist if not l.startswith("#")]
    assert data[0] == "epoch,lr,train_mse,val_mse,wall_seconds"
    assert len(data) == 1 + 2
    # deterministic mode zeroes wall time for byte-stable output
    assert data[1].split(",")[4] == "0.0"
    assert (workdir / "model.ckpt").exists()


def test_eval_writes_reports(workdir, capsys):
    rc = main(["eval", "--dataset-dir", str(workdir / "ds"), "--seed", "11",
               "--checkpoint", str(workdir / "model.ckpt"),
               "--metrics-csv", str(workdir / "metrics.csv"),
               "--bins-csv", str(workdir / "bins.csv"),
               "--prediction-svg", str(workdir / "pred.svg"),
               "--bins-svg", str(workdir / "binplot.svg")] + MODEL)
    assert rc == 0
    out = kv(capsys)
    assert out["variant"] == "rpc_tcn"
    assert out["split"] == "test"
    assert float(out["mae"]) >= 0.0
    lines = (workdir / "metrics.csv").read_text().splitlines()
    header = [l for l in lines if not l.startswith("#")][0]
    assert header == "variant,mae_n,pct_error,pearson_r,n_samples"
    assert (workdir / "pred.svg").read_text().startswith("<?xml")
    assert (workdir / "binplot.svg").exists()


def test_eval_split_selector(workdir, capsys):
    rc = main(["eval", "--dataset-dir", str(workdir / "ds"), "--seed", "11",
               "--checkpoint", str(workdir / "model.ckpt"),
               "--metrics-csv", str(workdir / "m2.csv"),
               "--bins-csv", str(workdir / "b2.csv"),
               "--prediction-svg", str(workdir / "p2.svg"),
               "--bins-svg", str(workdir / "bp2.svg"),
               "--split", "val"] + MODEL)
    assert rc == 0
    assert kv(capsys)["split"] == "val"


def test_infer_writes_predictions(workdir, capsys):
    rc = main(["infer", "--dataset-dir", str(workdir / "ds"),
               "--checkpoint", str(workdir / "model.ckpt"),
               "--predictions-csv", str(workdir / "preds.csv")] + MODEL)
    assert rc == 0
    out = kv(capsys)
    # 75 frames, n=7 -> 61 sliding windows
    assert out["predictions"] == "61"
    lines = (workdir / "preds.csv").read_text().splitlines()
    data = [l for l in lines if not l.startswith("#")]
    assert data[0] == "t,prediction_n"
    assert len(data) == 1 + 61


def test_plot_from_history(workdir, capsys):
    rc = main(["plot", "--history-csv", str(workdir / "history.csv"),
               "--loss-svg", str(workdir / "loss.svg")])
    assert rc == 0
    assert kv(capsys)["epochs"] == "2"
    assert (workdir / "loss.svg").read_text().startswith("<?xml")


def test_resume_continues_epochs(workdir, tmp_path, capsys):
    import shutil
    ckpt = tmp_path / "model.ckpt"
    shutil.copy(workdir / "model.ckpt", ckpt)
    rc = main(["train", "--dataset-dir", str(workdir / "ds"), "--seed", "11",
               "--checkpoint", str(ckpt), "--resume", "true",
               "--history-csv", str(tmp_path / "h2.csv"),
               "--deterministic"] + TRAIN)
    assert rc == 0
    out = kv(capsys)
    assert out["epochs_trained"] == "4"
    rows = [l for l in (tmp_path / "h2.csv").read_text().splitlines()
            if not l.startswith("#")][1:]
    assert rows[0].split(",")[0] == "2"    # resumed epoch numbering


def test_ablate_runs_all_variants(workdir, tmp_path, capsys):
    rc = main(["ablate", "--dataset-dir", str(workdir / "ds"), "--seed", "11",
               "--metrics-csv", str(tmp_path / "abl.csv"),
               "--bins-csv", str(tmp_path / "ablbins.csv"),
               "--deterministic"] + TRAIN)
    assert rc == 0
    out = kv(capsys)
    for variant in ("single_frame_rgb", "rgb_tcn", "pc_tcn", "rpc_tcn"):
        assert f"{variant}_mae" in out
    lines = [l for l in (tmp_path / "abl.csv").read_text().splitlines()
             if not l.startswith("#")]
    assert lines[0] == "variant,mae_n,pct_error,pearson_r,n_samples"
    assert [l.split(",")[0] for l in lines[1:]] == [
        "single_frame_rgb", "rgb_tcn", "pc_tcn", "rpc_tcn"]
    # every variant scores the same held-out samples
    assert len({l.split(",")[4] for l in lines[1:]}) == 1


def test_exit_code_config_error(capsys):
    assert main(["train", "--seed", "1"]) == 1              # no dataset_dir
    assert main(["train", "--dataset-dir", "d", "--seed", "1",
                 "--bogus-key", "3"]) == 1
    assert main(["gen-data", "--dataset-dir", "d", "--seed", "x"]) == 1
    err = capsys.readouterr().err
    assert "config error" in err


def test_exit_code_io_error(tmp_path, capsys):
    rc = main(["train", "--dataset-dir", str(tmp_path / "missing"),
               "--seed", "1"] + TRAIN)
    assert rc == 2
    assert "i/o error" in capsys.readouterr().err


def test_exit_code_missing_checkpoint(workdir, tmp_path, capsys):
    rc = main(["eval", "--dataset-dir", str(workdir / "ds"), "--seed", "11",
               "--checkpoint", str(tmp_path / "absent.ckpt")] + MODEL)
    assert rc == 4
    assert "checkpoint error" in capsys.readouterr().err


def test_exit_code_divergence(workdir, tmp_path, capsys):
    rc = main(["train", "--dataset-dir", str(workdir / "ds"), "--seed", "11",
               "--checkpoint", str(tmp_path / "m.ckpt"),
               "--history-csv", str(tmp_path / "h.csv"),
               "--base-lr", "1e18"] + TRAIN)
    assert rc == 3
    assert "diverged" in capsys.readouterr().err


def test_deterministic_pipeline_byte_identical(tmp_path, capsys, monkeypatch):
    # identical command lines run from two different working directories
    outs = []
    for name in ("one", "two"):
        d = tmp_path / name
        d.mkdir()
        monkeypatch.chdir(d)
        assert main(["gen-data", "--dataset-dir", "ds",
                     "--seed", "9"] + SCENE) == 0
        assert main(["train", "--dataset-dir", "ds", "--seed", "9",
                     "--deterministic"] + TRAIN) == 0
        assert main(["eval", "--dataset-dir", "ds", "--seed", "9",
                     "--deterministic"] + MODEL) == 0
        outs.append(d)
    capsys.readouterr()
    a, b = outs
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    assert (a / "history.csv").read_bytes() == (b / "history.csv").read_bytes()
    assert (a / "model.ckpt").read_bytes() == (b / "model.ckpt").read_bytes()
    assert (a / "bins.csv").read_bytes() == (b / "bins.csv").read_bytes()


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "forcesense.cli", "gen-data",
                          "--dataset-dir", str(tmp_path / "ds"),
                          "--seed", "2"] + SCENE,
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert "frames=75" in out.stdout
