"""Command-line entry point.

    forcesense <command> [--config FILE] [--key value ...]

Commands: gen-data, train, eval, ablate, infer, plot.  Any config key can be
overridden as ``--key value`` (hyphens map to underscores); overrides win
over the file.  stdout carries machine-readable ``key=value`` lines only;
diagnostics go to stderr.

Exit codes: 0 success, 1 config error, 2 I/O or dataset error, 3 training
divergence, 4 checkpoint error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import sys
from pathlib import Path

import numpy as np

from . import evaluation, pipeline, plots, runconfig, synthgen, tcn
from .errors import CheckpointError, ConfigError, DatasetError, TrainingDiverged
from .nn_core import load_checkpoint, save_checkpoint

COMMANDS = ("gen-data", "train", "eval", "ablate", "infer", "plot")


def _parse_overrides(extra: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        body = tok[2:].replace("-", "_")
        if "=" in body:
            key, _, val = body.partition("=")
        else:
            i += 1
            if i >= len(extra):
                raise ConfigError(f"missing value for override {tok!r}")
            key, val = body, extra[i]
        out[key] = val
        i += 1
    return out


def _apply_threads(threads: int | None) -> None:
    if threads is None:
        return
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    try:
        import numba
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass  # numpy backend: single process, nothing to cap


def _load_dataset(cfg: dict) -> pipeline.FrameDataset:
    return pipeline.load_frame_dataset(
        cfg["dataset_dir"], runconfig.intrinsics(cfg),
        num_points=cfg["pc_points"], tolerance=cfg["sync_tolerance_s"])


def _dataset_checksum(dataset_dir: str | Path) -> str:
    """sha256 over the manifest and every frame file, in sorted path order."""
    root = Path(dataset_dir)
    h = hashlib.sha256()
    for p in sorted([root / "manifest.jsonl"] + list((root / "frames").iterdir())):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def _checkpointed_model(cfg: dict) -> tuple[tcn.ForceModel, dict, dict]:
    arrays, ckpt_cfg, meta = load_checkpoint(cfg["checkpoint"])
    model = tcn.ForceModel(runconfig.model_config(cfg), np.random.default_rng(0))
    model.load_arrays(arrays)
    return model, ckpt_cfg, meta


def _effective_n(cfg: dict) -> int:
    return 0 if cfg["variant"] == "single_frame_rgb" else cfg["window_n"]


def _write_history_csv(path: str | Path, history: list[dict],
                       echo: dict[str, str]) -> None:
    with open(path, "w", newline="") as fh:
        for key, val in echo.items():
            fh.write(f"# {key} = {val}\n")
        wr = csv.writer(fh)
        wr.writerow(["epoch", "lr", "train_mse", "val_mse", "wall_seconds"])
        for row in history:
            wr.writerow([row["epoch"], repr(row["lr"]), repr(row["train_mse"]),
                         repr(row["val_mse"]), repr(row["wall_seconds"])])


def _read_history_csv(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"history file not found: {path}")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        for row in reader:
            rows.append({"epoch": int(row["epoch"]), "lr": float(row["lr"]),
                         "train_mse": float(row["train_mse"]),
                         "val_mse": float(row["val_mse"]),
                         "wall_seconds": float(row["wall_seconds"])})
    if not rows:
        raise DatasetError(f"{path}: no history rows")
    return rows


def cmd_gen_data(cfg: dict, deterministic: bool) -> int:
    scene = runconfig.scene_config(cfg)
    count = synthgen.generate_dataset(scene, cfg["dataset_dir"])
    print(f"frames={count}")
    print(f"checksum={_dataset_checksum(cfg['dataset_dir'])}")
    return 0


def cmd_train(cfg: dict, deterministic: bool) -> int:
    ds = _load_dataset(cfg)
    tconf = runconfig.train_config(cfg, deterministic)
    n = _effective_n(cfg)
    tr, va, _ = evaluation.make_split_windowsets(ds, n, cfg["seed"], window_n=n)
    resume_arrays = resume_meta = None
    if cfg["resume"]:
        resume_arrays, _, resume_meta = load_checkpoint(cfg["checkpoint"])
    result = tcn.train(tr, va, tconf, cfg["seed"], resume_arrays=resume_arrays,
                       resume_meta=resume_meta)
    echo = runconfig.config_echo(cfg)
    arrays = result.model.export_arrays()
    for (name, _), vel in zip(result.model.named_params(), result.velocities):
        arrays[f"opt.{name}"] = vel
    save_checkpoint(cfg["checkpoint"], arrays, config=echo, meta={
        "epochs_trained": result.epochs_trained,
        "best_epoch": result.best_epoch,
        "best_val_mse": result.best_val_mse,
        "variant": cfg["variant"],
    })
    _write_history_csv(cfg["history_csv"], result.history, echo)
    print(f"epochs_trained={result.epochs_trained}")
    print(f"best_epoch={result.best_epoch}")
    print(f"best_val_mse={result.best_val_mse!r}")
    print(f"checkpoint={cfg['checkpoint']}")
    print(f"history_csv={cfg['history_csv']}")
    return 0


def cmd_eval(cfg: dict, deterministic: bool) -> int:
    ds = _load_dataset(cfg)
    model, _, _ = _checkpointed_model(cfg)
    n = _effective_n(cfg)
    tr, va, te = evaluation.make_split_windowsets(ds, n, cfg["seed"], window_n=n)
    sets = {"train": tr, "val": va, "test": te,
            "all": tcn.WindowSet(ds, np.arange(n, len(ds) - n), n)}
    if cfg["split"] not in sets:
        raise ConfigError(f"split must be one of {sorted(sets)}, got "
                          f"{cfg['split']!r}")
    ws = sets[cfg["split"]]
    order = np.argsort(ws.centers)
    ws = tcn.WindowSet(ds, ws.centers[order], ws.n)
    preds = tcn.predict_windowset(model, ws)
    report = evaluation.compute_metrics(preds, ws.labels,
                                        max_abs_force=ds.max_abs_force)
    echo = runconfig.config_echo(cfg)
    results = [evaluation.AblationResult(variant=cfg["variant"], report=report)]
    evaluation.write_metrics_csv(cfg["metrics_csv"], results, echo)
    evaluation.write_bins_csv(cfg["bins_csv"], results, echo)
    plots.plot_prediction_vs_reference(cfg["prediction_svg"],
                                       ds.t[ws.centers], ws.labels, preds)
    plots.plot_bin_errors(cfg["bins_svg"], report.per_bin)
    print(f"variant={cfg['variant']}")
    print(f"split={cfg['split']}")
    print(f"n_samples={report.n_samples}")
    print(f"mae={report.mae!r}")
    print(f"pct_error={report.pct_error!r}")
    print(f"pearson_r={report.pearson_r!r}")
    print(f"metrics_csv={cfg['metrics_csv']}")
    return 0


def cmd_ablate(cfg: dict, deterministic: bool) -> int:
    ds = _load_dataset(cfg)
    tconf = runconfig.train_config(cfg, deterministic)
    results = evaluation.run_ablation(ds, tconf, cfg["seed"])
    echo = runconfig.config_echo(cfg)
    evaluation.write_metrics_csv(cfg["metrics_csv"], results, echo)
    evaluation.write_bins_csv(cfg["bins_csv"], results, echo)
    print(f"seed={cfg['seed']}")
    for r in results:
        print(f"{r.variant}_mae={r.report.mae!r}")
        print(f"{r.variant}_pct={r.report.pct_error!r}")
    print(f"metrics_csv={cfg['metrics_csv']}")
    return 0


def cmd_infer(cfg: dict, deterministic: bool) -> int:
    ds = _load_dataset(cfg)
    model, _, _ = _checkpointed_model(cfg)
    feats = []
    chunk = 512
    for i in range(0, len(ds), chunk):
        block = model.encode_frames(ds.rgb[i:i + chunk], ds.points[i:i + chunk],
                                    train=False)
        feats.extend(tcn.FeatureVector(values=row, t=float(ds.t[i + j]))
                     for j, row in enumerate(block))
    pairs = tcn.predict(model.tcn, feats, model.n)
    with open(cfg["predictions_csv"], "w", newline="") as fh:
        for key, val in runconfig.config_echo(cfg).items():
            fh.write(f"# {key} = {val}\n")
        wr = csv.writer(fh)
        wr.writerow(["t", "prediction_n"])
        for t, y in pairs:
            wr.writerow([repr(t), repr(y)])
    print(f"predictions={len(pairs)}")
    print(f"predictions_csv={cfg['predictions_csv']}")
    return 0


def cmd_plot(cfg: dict, deterministic: bool) -> int:
    history = _read_history_csv(cfg["history_csv"])
    plots.plot_loss_curves(cfg["loss_svg"], history)
    print(f"epochs={len(history)}")
    print(f"loss_svg={cfg['loss_svg']}")
    return 0


_HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "infer": cmd_infer,
    "plot": cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="forcesense",
        description="Contact-force regression from synchronized RGB-D video.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--deterministic", action="store_true",
                        help="fixed seeds, zeroed timings, serial reductions")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap kernel worker threads")
    try:
        args, extra = parser.parse_known_args(argv)
        overrides = _parse_overrides(extra)
        file_values = (runconfig.read_config_file(args.config)
                       if args.config else {})
        cfg = runconfig.build_config(args.command, file_values, overrides)
        _apply_threads(args.threads)
        return _HANDLERS[args.command](cfg, deterministic=args.deterministic)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 4
    except (DatasetError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
