"""Depth-image to point-cloud conversion and cloud normalization.

Pinhole back-projection: a pixel (col, row) with depth z maps to

    x = (col - cx) * z / fx
    y = (row - cy) * z / fy
    z = z

after which the cloud is centered by the per-axis mean over valid pixels,
scaled onto the unit sphere, and downsampled to a fixed point count by
stride selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .io_dataset import DepthImage


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"intrinsic {name} must be finite, got {v}")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")


@dataclass(frozen=True)
class PointCloud:
    """points has shape (N, 3), float64, all finite."""

    points: np.ndarray

    def __post_init__(self):
        p = self.points
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {p.shape}")
        if p.dtype != np.float64:
            raise ValueError(f"points must be float64, got {p.dtype}")
        if not np.all(np.isfinite(p)):
            raise ValueError("points must be finite")

    def __len__(self) -> int:
        return self.points.shape[0]


def unproject(depth: DepthImage, intrinsics: CameraIntrinsics) -> PointCloud:
    """Back-project valid (nonzero) depth pixels, then subtract the centroid.

    Row-major pixel order: point k comes before point j when its pixel
    precedes j's in (row, col) order.  Raises ValueError if every pixel is
    invalid.
    """
    d = depth.depth_mm
    rows, cols = np.nonzero(d > 0)
    if rows.size == 0:
        raise ValueError("depth image has no valid (nonzero) pixels")
    z = d[rows, cols]
    x = (cols - intrinsics.cx) * z / intrinsics.fx
    y = (rows - intrinsics.cy) * z / intrinsics.fy
    pts = np.stack([x, y, z], axis=1).astype(np.float64)
    pts -= pts.mean(axis=0)
    return PointCloud(points=pts)


def normalize_unit_sphere(cloud: PointCloud) -> PointCloud:
    """Scale so the farthest point from the origin has norm 1.

    A degenerate cloud (all points at the origin) is returned unchanged
    rather than dividing by zero.
    """
    norms = np.linalg.norm(cloud.points, axis=1)
    scale = norms.max() if len(cloud) else 0.0
    if scale == 0.0:
        return PointCloud(points=cloud.points.copy())
    return PointCloud(points=cloud.points / scale)


def downsample_uniform(cloud: PointCloud, num_points: int) -> PointCloud:
    """Select ``num_points`` by even stride: indices floor(k*N/m), k<m.

    Deterministic.  When the cloud has fewer points than requested, indices
    cycle (k*N//m repeats values), so the result always has exactly
    ``num_points`` rows.
    """
    if num_points < 1:
        raise ValueError(f"num_points must be >= 1, got {num_points}")
    n = len(cloud)
    if n == 0:
        raise ValueError("cannot downsample an empty cloud")
    idx = (np.arange(num_points, dtype=np.int64) * n) // num_points
    return PointCloud(points=cloud.points[idx].copy())


def depth_to_input_cloud(depth: DepthImage, intrinsics: CameraIntrinsics,
                         num_points: int) -> PointCloud:
    """unproject -> normalize_unit_sphere -> downsample_uniform."""
    return downsample_uniform(normalize_unit_sphere(unproject(depth, intrinsics)),
                              num_points)
