"""Synthetic RGB/depth/force sequence generator.

A virtual spherical-tipped tool indents an elastic surface.  Depth is a
heightfield: base plane minus a Gaussian bump of height delta (the
indentation) centered at the tool position, with width set by the tool
radius.  The contact force is linear-elastic, fz = -k * delta (negative
sign: pressing down).  RGB is a Lambertian shading of the clean deformed
surface under a fixed light, so appearance carries the same geometry signal
through an entirely different observation channel.

Per-stream timestamps carry bounded jitter (RGB exact, depth late, force
early) to exercise nearest-sample synchronization: at the default 3 ms bound
every frame pairs within a 10 ms tolerance, while any bound whose minimum
offset exceeds the tolerance drops every frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetError
from .geometry import CameraIntrinsics
from .io_dataset import DepthImage, RgbImage, write_pgm16, write_ppm

# offsets are drawn from [JITTER_LO, 1] * jitter so the realized jitter has a
# known positive floor: bound <= tol/1 keeps all frames, bound > tol/JITTER_LO
# drops all of them
JITTER_LO = 0.8

_LIGHT = np.array([0.3, -0.4, 0.85])
_LIGHT = _LIGHT / np.linalg.norm(_LIGHT)
_ALBEDO = np.array([0.62, 0.42, 0.36])  # skin-ish tone
_AMBIENT = 0.25


@dataclass(frozen=True)
class SceneConfig:
    depth_size: int = 16
    rgb_size: int = 32
    base_depth_mm: float = 400.0
    tool_radius_mm: float = 9.0
    stiffness_n_per_mm: float = 2.4
    smoothness: float = 0.92
    drive_pos_mm: float = 0.7
    drive_indent_mm: float = 0.35
    max_indent_mm: float = 25.0
    fps: float = 30.0
    duration_s: float = 10.0
    noise_rgb: float = 0.02
    noise_depth_mm: float = 0.4
    noise_force_n: float = 0.3
    jitter_ms: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.stiffness_n_per_mm <= 0:
            raise ValueError(f"stiffness must be > 0, got {self.stiffness_n_per_mm}")
        if self.fps <= 0:
            raise ValueError(f"fps must be > 0, got {self.fps}")
        if not 0 <= self.max_indent_mm < self.base_depth_mm:
            raise ValueError("max indentation must lie in [0, base depth)")
        if self.depth_size < 2 or self.rgb_size < 2:
            raise ValueError("grid sizes must be >= 2")
        if not 0 <= self.smoothness < 1:
            raise ValueError(f"smoothness must be in [0, 1), got {self.smoothness}")
        if min(self.noise_rgb, self.noise_depth_mm, self.noise_force_n,
               self.jitter_ms, self.drive_pos_mm, self.drive_indent_mm) < 0:
            raise ValueError("noise, jitter, and drive levels must be >= 0")
        # jitter may shrink a stream's gap by at most (1-JITTER_LO)*jitter per
        # step; keep that below the frame period so streams stay monotone
        if (1 - JITTER_LO) * self.jitter_ms >= 1000.0 / self.fps:
            raise ValueError("jitter too large for the frame period")

    @property
    def num_frames(self) -> int:
        return int(round(self.fps * self.duration_s))

    def intrinsics(self) -> CameraIntrinsics:
        # focal length chosen so one depth pixel spans 5 mm at a 400 mm base
        f = self.depth_size * self.base_depth_mm / 80.0
        return CameraIntrinsics(fx=f, fy=f, cx=(self.depth_size - 1) / 2.0,
                                cy=(self.depth_size - 1) / 2.0)


@dataclass(frozen=True)
class ToolState:
    x_mm: float
    y_mm: float
    indent_mm: float

    def __post_init__(self):
        if self.indent_mm < 0:
            raise ValueError(f"indentation must be >= 0, got {self.indent_mm}")


def generate_trajectory(config: SceneConfig) -> list[ToolState]:
    """Smoothed random walk of tool position and indentation.

    Velocities follow an AR(1) process (coefficient = smoothness) driven by
    seeded Gaussian noise; indentation is clipped to [0, max].  Zero drive
    noise gives a constant trajectory (velocities start at zero).
    """
    rng = np.random.default_rng([config.seed, 1])
    n = config.num_frames
    intr = config.intrinsics()
    half_extent = (config.depth_size / 2.0) * config.base_depth_mm / intr.fx
    pos_bound = 0.35 * half_extent  # keep the bump well inside the view
    pos = np.zeros(2)
    vel = np.zeros(2)
    indent = 0.5 * config.max_indent_mm
    vind = 0.0
    out: list[ToolState] = []
    for _ in range(n):
        vel = config.smoothness * vel + config.drive_pos_mm * rng.standard_normal(2)
        pos = np.clip(pos + vel, -pos_bound, pos_bound)
        vind = config.smoothness * vind + config.drive_indent_mm * rng.standard_normal()
        indent = float(np.clip(indent + vind, 0.0, config.max_indent_mm))
        out.append(ToolState(x_mm=float(pos[0]), y_mm=float(pos[1]),
                             indent_mm=indent))
    return out


def _lateral_grid(size: int, config: SceneConfig):
    """Physical (X, Y) mm coordinates of a size x size grid at the base plane."""
    intr = config.intrinsics()
    # same extent as the depth grid regardless of resolution
    step = config.base_depth_mm / intr.fx * config.depth_size / size
    coords = (np.arange(size) - (size - 1) / 2.0) * step
    return np.meshgrid(coords, coords, indexing="xy")


def _bump(X: np.ndarray, Y: np.ndarray, state: ToolState,
          config: SceneConfig) -> np.ndarray:
    s2 = config.tool_radius_mm ** 2
    r2 = (X - state.x_mm) ** 2 + (Y - state.y_mm) ** 2
    return state.indent_mm * np.exp(-r2 / (2.0 * s2))


def render_frame(state: ToolState, config: SceneConfig,
                 rng: np.random.Generator | None = None):
    """One observation triple (RgbImage, DepthImage, fz).

    fz is the exact pre-noise force -k*delta; observation noise (when a rng
    is given and levels are nonzero) lands on pixels only.  Force noise is
    the dataset writer's job so the clean label stays available here.
    """
    # depth: quantized to integer millimeters, noise dithered in before rounding
    Xd, Yd = _lateral_grid(config.depth_size, config)
    depth = config.base_depth_mm - _bump(Xd, Yd, state, config)
    if rng is not None and config.noise_depth_mm > 0:
        depth = depth + config.noise_depth_mm * rng.standard_normal(depth.shape)
    depth = np.clip(np.rint(depth), 0, 65535)
    depth_img = DepthImage(depth_mm=depth)

    # rgb: shade the clean surface, then add pixel noise
    Xr, Yr = _lateral_grid(config.rgb_size, config)
    h = _bump(Xr, Yr, state, config)
    s2 = config.tool_radius_mm ** 2
    # analytic heightfield gradient; surface z points toward the camera
    dhx = -h * (Xr - state.x_mm) / s2
    dhy = -h * (Yr - state.y_mm) / s2
    norm = np.sqrt(dhx ** 2 + dhy ** 2 + 1.0)
    shade = np.clip((dhx * _LIGHT[0] + dhy * _LIGHT[1] + _LIGHT[2]) / norm, 0.0, 1.0)
    rgb = _ALBEDO[None, None, :] * (_AMBIENT + (1 - _AMBIENT) * shade[:, :, None])
    if rng is not None and config.noise_rgb > 0:
        rgb = rgb + config.noise_rgb * rng.standard_normal(rgb.shape)
    rgb_img = RgbImage(pixels=np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8))

    fz = -config.stiffness_n_per_mm * state.indent_mm
    return rgb_img, depth_img, fz


def generate_dataset(config: SceneConfig, out_dir: str | Path) -> int:
    """Write frames + manifest.jsonl in the loader's on-disk format.

    RGB timestamps are exact frame times k/fps; depth runs late and force
    early by jitter offsets drawn from [0.8, 1.0] * jitter_ms.  Returns the
    frame count.
    """
    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    try:
        frames_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create {frames_dir}: {exc}") from exc
    traj = generate_trajectory(config)
    jrng = np.random.default_rng([config.seed, 2])
    frng = np.random.default_rng([config.seed, 3])
    j = config.jitter_ms / 1000.0
    lines = []
    try:
        for k, state in enumerate(traj):
            prng = np.random.default_rng([config.seed, 4, k])
            rgb, depth, fz = render_frame(state, config, rng=prng)
            t = k / config.fps
            t_depth = t + j * jrng.uniform(JITTER_LO, 1.0)
            t_force = t - j * jrng.uniform(JITTER_LO, 1.0)
            fz_obs = fz + config.noise_force_n * frng.standard_normal()
            rgb_file = f"frames/rgb_{k:06d}.ppm"
            depth_file = f"frames/depth_{k:06d}.pgm"
            write_ppm(rgb, out_dir / rgb_file)
            write_pgm16(depth, out_dir / depth_file)
            lines.append(json.dumps({"kind": "rgb", "t": t, "file": rgb_file}))
            lines.append(json.dumps({"kind": "depth", "t": t_depth,
                                     "file": depth_file}))
            lines.append(json.dumps({"kind": "force", "t": t_force,
                                     "fz": fz_obs}))
        (out_dir / "manifest.jsonl").write_text("\n".join(lines) + "\n",
                                                encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"failed writing dataset under {out_dir}: {exc}") from exc
    return len(traj)
