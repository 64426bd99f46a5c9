"""Disk dataset -> aligned in-memory arrays ready for training.

Reads the manifest, synchronizes the three streams on RGB timestamps, loads
frame files, and runs the depth->cloud geometry once up front (the geometry
has no trainable parameters, so per-epoch recomputation would be waste).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry, io_dataset
from .errors import DatasetError


@dataclass(frozen=True)
class FrameDataset:
    """Synchronized frames as dense arrays; index i is one aligned frame."""

    rgb: np.ndarray     # (N, 3, H, W), floats in [0, 1]
    points: np.ndarray  # (N, P, 3), unit-sphere normalized clouds
    fz: np.ndarray      # (N,), newtons
    t: np.ndarray       # (N,), pivot (RGB) timestamps, seconds
    num_dropped: int    # RGB frames without sync partners

    def __post_init__(self):
        n = self.rgb.shape[0]
        if not (self.points.shape[0] == self.fz.shape[0] == self.t.shape[0] == n):
            raise ValueError("frame count mismatch across modalities")

    def __len__(self) -> int:
        return self.rgb.shape[0]

    @property
    def max_abs_force(self) -> float:
        return float(np.max(np.abs(self.fz)))


def load_frame_dataset(dataset_dir: str | Path,
                       intrinsics: geometry.CameraIntrinsics,
                       num_points: int = 256,
                       tolerance: float = io_dataset.DEFAULT_SYNC_TOLERANCE_S,
                       dtype=np.float64) -> FrameDataset:
    """Load a generated dataset directory into a FrameDataset."""
    dataset_dir = Path(dataset_dir)
    streams = io_dataset.read_manifest(dataset_dir / "manifest.jsonl")
    frames = io_dataset.synchronize(streams.rgb, streams.depth, streams.force,
                                    tolerance=tolerance)
    if not frames:
        raise DatasetError(f"{dataset_dir}: no frames survived synchronization")
    rgb_list = []
    pts_list = []
    for fr in frames:
        img = io_dataset.read_ppm(dataset_dir / fr.rgb.file)
        dep = io_dataset.read_pgm16(dataset_dir / fr.depth.file)
        rgb_list.append((img.pixels.astype(dtype) / 255.0).transpose(2, 0, 1))
        cloud = geometry.depth_to_input_cloud(dep, intrinsics, num_points)
        pts_list.append(cloud.points.astype(dtype))
    return FrameDataset(
        rgb=np.stack(rgb_list),
        points=np.stack(pts_list),
        fz=np.array([fr.fz for fr in frames], dtype=np.float64),
        t=np.array([fr.t for fr in frames], dtype=np.float64),
        num_dropped=len(streams.rgb) - len(frames),
    )
