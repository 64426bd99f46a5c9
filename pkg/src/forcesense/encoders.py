"""Per-frame spatial feature extraction.

Two encoders produce fixed-width features that get concatenated, RGB first:
a small strided conv net over the RGB image and an order-free point-cloud
encoder (shared per-point MLP, channel-wise max over points, post-pool
linear).  Widths default to 64 + 32 at desk scale; a paper-shape config
(4096 + 512 -> 4608) exists for shape tests.

Both encoders expose batched forward/backward on raw arrays for the training
loop, plus single-input convenience wrappers operating in eval mode.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .geometry import PointCloud
from .io_dataset import RgbImage
from .nn_core import BatchNorm, Conv2d, Linear, ReLU


@dataclass(frozen=True)
class FeatureVector:
    """Concatenated per-frame feature [rgb ‖ pc] with its frame timestamp."""

    values: np.ndarray
    t: float

    def __post_init__(self):
        if self.values.ndim != 1:
            raise ValueError(f"feature values must be 1-D, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")

    @property
    def width(self) -> int:
        return self.values.shape[0]


def rgb_image_to_array(img: RgbImage, dtype=np.float64) -> np.ndarray:
    """(H, W, 3) uint8 -> (3, H, W) floats in [0, 1]."""
    return (img.pixels.astype(dtype) / 255.0).transpose(2, 0, 1)


class RgbEncoder:
    """Strided conv stack, then a linear layer to D_rgb features.

    Each conv halves the spatial resolution (stride 2, half padding), so the
    flattened width is channels[-1] * (H / 2^len(channels)) * (W / 2^...).
    """

    def __init__(self, rng: np.random.Generator, in_hw: tuple[int, int] = (32, 32),
                 channels: tuple[int, ...] = (8, 16), kernel_size: int = 3,
                 out_features: int = 64, dtype=np.float64):
        self.in_hw = tuple(in_hw)
        self.out_features = out_features
        self.convs: list[Conv2d] = []
        self.bns: list[BatchNorm] = []
        self.relus: list[ReLU] = []
        h, w = in_hw
        c_in = 3
        for c_out in channels:
            self.convs.append(Conv2d(c_in, c_out, kernel_size, stride=2, rng=rng,
                                     dtype=dtype))
            self.bns.append(BatchNorm(c_out, dtype=dtype))
            self.relus.append(ReLU())
            ph = (kernel_size - 1) // 2
            h = (h + 2 * ph - kernel_size) // 2 + 1
            w = (w + 2 * ph - kernel_size) // 2 + 1
            c_in = c_out
        self._flat_shape = (c_in, h, w)
        self.fc = Linear(c_in * h * w, out_features, rng=rng, dtype=dtype)

    def forward(self, x: np.ndarray, train: bool = False,
                update_running: bool = True) -> np.ndarray:
        B = x.shape[0]
        if x.shape[1] != 3 or x.shape[2:] != self.in_hw:
            raise ValueError(f"rgb input must be (B, 3, {self.in_hw[0]}, "
                             f"{self.in_hw[1]}), got {x.shape}")
        for conv, bn, relu in zip(self.convs, self.bns, self.relus):
            x = relu.forward(bn.forward(conv.forward(x, train), train,
                                        update_running), train)
        return self.fc.forward(x.reshape(B, -1), train)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx = self.fc.backward(dy).reshape((-1,) + self._flat_shape)
        for conv, bn, relu in zip(reversed(self.convs), reversed(self.bns),
                                  reversed(self.relus)):
            dx = conv.backward(bn.backward(relu.backward(dx)))
        return dx

    def named_params(self):
        out = []
        for i, (conv, bn) in enumerate(zip(self.convs, self.bns)):
            out += [(f"conv{i}.{n}", p) for n, p in conv.named_params()]
            out += [(f"bn{i}.{n}", p) for n, p in bn.named_params()]
        out += [(f"fc.{n}", p) for n, p in self.fc.named_params()]
        return out

    def state_arrays(self):
        out = []
        for i, bn in enumerate(self.bns):
            out += [(f"bn{i}.{n}", a) for n, a in bn.state_arrays()]
        return out


class PointEncoder:
    """Shared per-point MLP, symmetric max over points, post-pool linear.

    The max reduction is channel-wise and order-free, so the output is
    exactly invariant to point permutations for fixed weights (the per-point
    MLP applies identical weights to every point).
    """

    def __init__(self, rng: np.random.Generator, num_points: int = 256,
                 mlp: tuple[int, ...] = (16, 32), out_features: int = 32,
                 dtype=np.float64):
        self.num_points = num_points
        self.out_features = out_features
        self.linears: list[Linear] = []
        self.bns: list[BatchNorm] = []
        self.relus: list[ReLU] = []
        c_in = 3
        for c_out in mlp:
            self.linears.append(Linear(c_in, c_out, rng=rng, dtype=dtype))
            self.bns.append(BatchNorm(c_out, dtype=dtype))
            self.relus.append(ReLU())
            c_in = c_out
        self.post = Linear(c_in, out_features, rng=rng, dtype=dtype)
        self._pool_idx = None
        self._pooled_channels = c_in

    def forward(self, x: np.ndarray, train: bool = False,
                update_running: bool = True) -> np.ndarray:
        B, P, _ = x.shape
        if P != self.num_points or x.shape[2] != 3:
            raise ValueError(f"point input must be (B, {self.num_points}, 3), "
                             f"got {x.shape}")
        h = x.reshape(B * P, 3)
        for lin, bn, relu in zip(self.linears, self.bns, self.relus):
            h = relu.forward(bn.forward(lin.forward(h, train), train,
                                        update_running), train)
        pooled, idx = kernels.maxpool_points_forward(
            np.ascontiguousarray(h.reshape(B, P, -1)))
        self._pool_idx = idx
        return self.post.forward(pooled, train)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dpool = self.post.backward(dy)
        dx = kernels.maxpool_points_backward(dpool, self._pool_idx, self.num_points)
        B = dx.shape[0]
        dh = dx.reshape(B * self.num_points, -1)
        for lin, bn, relu in zip(reversed(self.linears), reversed(self.bns),
                                 reversed(self.relus)):
            dh = lin.backward(bn.backward(relu.backward(dh)))
        return dh.reshape(B, self.num_points, 3)

    def named_params(self):
        out = []
        for i, (lin, bn) in enumerate(zip(self.linears, self.bns)):
            out += [(f"mlp{i}.{n}", p) for n, p in lin.named_params()]
            out += [(f"bn{i}.{n}", p) for n, p in bn.named_params()]
        out += [(f"post.{n}", p) for n, p in self.post.named_params()]
        return out

    def state_arrays(self):
        out = []
        for i, bn in enumerate(self.bns):
            out += [(f"bn{i}.{n}", a) for n, a in bn.state_arrays()]
        return out


def encode_rgb(img: RgbImage, enc: RgbEncoder) -> np.ndarray:
    """Eval-mode feature for one image; width enc.out_features."""
    x = rgb_image_to_array(img)[None]
    return enc.forward(x, train=False)[0]


def encode_points(pc: PointCloud, enc: PointEncoder) -> np.ndarray:
    """Eval-mode feature for one cloud; exactly permutation invariant."""
    if len(pc) != enc.num_points:
        raise ValueError(f"encoder expects {enc.num_points} points, got {len(pc)}")
    return enc.forward(pc.points[None], train=False)[0]


def concat_features(rgb_feat: np.ndarray, pc_feat: np.ndarray,
                    t: float = 0.0) -> FeatureVector:
    """[rgb ‖ pc], RGB first."""
    if rgb_feat.ndim != 1 or pc_feat.ndim != 1:
        raise ValueError("features must be 1-D vectors")
    return FeatureVector(values=np.concatenate([rgb_feat, pc_feat]), t=t)


def write_features_csv(path: str | Path, features: list[FeatureVector]) -> None:
    """One row per frame: t, f0, f1, ..."""
    if not features:
        raise ValueError("no features to write")
    width = features[0].width
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t"] + [f"f{i}" for i in range(width)])
        for fv in features:
            if fv.width != width:
                raise ValueError("inconsistent feature widths")
            wr.writerow([repr(fv.t)] + [repr(float(v)) for v in fv.values])
