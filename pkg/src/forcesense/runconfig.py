"""Flat key=value run configuration.

One UTF-8 text file, ``key = value`` per line, ``#`` starts a comment.
Unknown keys are rejected; each subcommand declares which keys it requires;
command-line ``--key value`` overrides win over the file.  The fully
resolved configuration is echoed as a ``#`` block on top of every output CSV
so results carry their provenance.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .errors import ConfigError
from .geometry import CameraIntrinsics
from .synthgen import SceneConfig
from .tcn import ModelConfig, TrainConfig


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_ints(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(int(tok) for tok in raw.split(","))


@dataclass(frozen=True)
class KeySpec:
    parse: Callable[[str], object]
    default: object = None  # None means no default: required somewhere
    required_for: frozenset = frozenset()


def _req(*commands: str) -> frozenset:
    return frozenset(commands)


SCHEMA: dict[str, KeySpec] = {
    # identity / paths
    "seed": KeySpec(int, required_for=_req("gen-data", "train", "eval", "ablate")),
    "dataset_dir": KeySpec(str, required_for=_req("gen-data", "train", "eval",
                                                  "ablate", "infer")),
    "checkpoint": KeySpec(str, "model.ckpt"),
    "history_csv": KeySpec(str, "history.csv"),
    "metrics_csv": KeySpec(str, "metrics.csv"),
    "bins_csv": KeySpec(str, "bins.csv"),
    "predictions_csv": KeySpec(str, "predictions.csv"),
    "prediction_svg": KeySpec(str, "prediction.svg"),
    "bins_svg": KeySpec(str, "bins.svg"),
    "loss_svg": KeySpec(str, "loss.svg"),
    # scene / generator
    "depth_size": KeySpec(int, 16),
    "rgb_size": KeySpec(int, 32),
    "base_depth_mm": KeySpec(float, 400.0),
    "tool_radius_mm": KeySpec(float, 9.0),
    "stiffness_n_per_mm": KeySpec(float, 2.4),
    "smoothness": KeySpec(float, 0.92),
    "drive_pos_mm": KeySpec(float, 0.7),
    "drive_indent_mm": KeySpec(float, 0.35),
    "max_indent_mm": KeySpec(float, 25.0),
    "fps": KeySpec(float, 30.0),
    "duration_s": KeySpec(float, 10.0),
    "noise_rgb": KeySpec(float, 0.02),
    "noise_depth_mm": KeySpec(float, 0.4),
    "noise_force_n": KeySpec(float, 0.3),
    "jitter_ms": KeySpec(float, 3.0),
    # camera / sync (defaults match the generator at depth_size 16)
    "fx": KeySpec(float, 80.0),
    "fy": KeySpec(float, 80.0),
    "cx": KeySpec(float, 7.5),
    "cy": KeySpec(float, 7.5),
    "sync_tolerance_s": KeySpec(float, 0.010),
    # model
    "variant": KeySpec(str, "rpc_tcn"),
    "window_n": KeySpec(int, 7),
    "rgb_hw": KeySpec(_parse_ints, (32, 32)),
    "rgb_channels": KeySpec(_parse_ints, (8, 16)),
    "rgb_features": KeySpec(int, 64),
    "pc_points": KeySpec(int, 256),
    "pc_mlp": KeySpec(_parse_ints, (16, 32)),
    "pc_features": KeySpec(int, 32),
    "tcn_channels": KeySpec(_parse_ints, (96, 64, 32)),
    "tcn_kernel": KeySpec(int, 3),
    "dtype": KeySpec(str, "float64"),
    # training
    "epochs": KeySpec(int, 50),
    "batch_size": KeySpec(int, 32),
    "base_lr": KeySpec(float, 1e-3),
    "momentum": KeySpec(float, 0.9),
    "resume": KeySpec(_parse_bool, False),
    # evaluation
    "split": KeySpec(str, "test"),
}


def read_config_file(path: str | Path) -> dict[str, str]:
    """Raw key -> value strings from a config file; duplicates rejected."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(),
                                  start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def build_config(command: str, file_values: dict[str, str] | None = None,
                 overrides: dict[str, str] | None = None) -> dict:
    """Resolve defaults + file + overrides into a typed config dict."""
    raw: dict[str, str] = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            raw[key] = value
    cfg: dict = {}
    for key, spec in SCHEMA.items():
        if key in raw:
            try:
                cfg[key] = spec.parse(raw[key])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {key!r}: {raw[key]!r} ({exc})")
        else:
            cfg[key] = spec.default
    for key, spec in SCHEMA.items():
        if command in spec.required_for and cfg.get(key) is None:
            raise ConfigError(f"missing required config key {key!r} "
                              f"for {command}")
    return cfg


def config_echo(cfg: dict) -> dict[str, str]:
    """Stable provenance block: every key, formatted, sorted."""
    out = {}
    for key in sorted(cfg):
        v = cfg[key]
        if isinstance(v, tuple):
            out[key] = ",".join(str(x) for x in v)
        elif isinstance(v, bool):
            out[key] = "true" if v else "false"
        elif isinstance(v, float):
            out[key] = repr(v)
        else:
            out[key] = str(v)
    return out


def scene_config(cfg: dict) -> SceneConfig:
    return SceneConfig(
        depth_size=cfg["depth_size"],
        rgb_size=cfg["rgb_size"],
        base_depth_mm=cfg["base_depth_mm"],
        tool_radius_mm=cfg["tool_radius_mm"],
        stiffness_n_per_mm=cfg["stiffness_n_per_mm"],
        smoothness=cfg["smoothness"],
        drive_pos_mm=cfg["drive_pos_mm"],
        drive_indent_mm=cfg["drive_indent_mm"],
        max_indent_mm=cfg["max_indent_mm"],
        fps=cfg["fps"],
        duration_s=cfg["duration_s"],
        noise_rgb=cfg["noise_rgb"],
        noise_depth_mm=cfg["noise_depth_mm"],
        noise_force_n=cfg["noise_force_n"],
        jitter_ms=cfg["jitter_ms"],
        seed=cfg["seed"] if cfg.get("seed") is not None else 0,
    )


def model_config(cfg: dict) -> ModelConfig:
    hw = cfg["rgb_hw"]
    if len(hw) != 2:
        raise ConfigError(f"rgb_hw needs exactly 2 values, got {hw}")
    return ModelConfig(
        variant=cfg["variant"],
        n=cfg["window_n"],
        rgb_hw=(hw[0], hw[1]),
        rgb_channels=cfg["rgb_channels"],
        rgb_features=cfg["rgb_features"],
        pc_points=cfg["pc_points"],
        pc_mlp=cfg["pc_mlp"],
        pc_features=cfg["pc_features"],
        tcn_channels=cfg["tcn_channels"],
        tcn_kernel=cfg["tcn_kernel"],
        dtype=cfg["dtype"],
    )


def train_config(cfg: dict, deterministic: bool = False) -> TrainConfig:
    return TrainConfig(
        model=model_config(cfg),
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        base_lr=cfg["base_lr"],
        momentum=cfg["momentum"],
        deterministic=deterministic,
    )


def intrinsics(cfg: dict) -> CameraIntrinsics:
    return CameraIntrinsics(fx=cfg["fx"], fy=cfg["fy"], cx=cfg["cx"], cy=cfg["cy"])
