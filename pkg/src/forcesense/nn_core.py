"""Minimal train-capable NN layers on top of the kernel backends.

Layers hold their parameters (float64 by default), cache the last forward's
activations, and write gradients into ``Param.grad`` on backward.  One
forward then one backward per step, mirroring how the training loop drives
them.  No autograd graph; composition is explicit in the model code.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import kernels
from .errors import CheckpointError, TrainingDiverged


class Param:
    """A trainable array and its gradient accumulator."""

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def shape(self):
        return self.value.shape


def he_normal(rng: np.random.Generator, shape, fan_in: int, dtype=np.float64) -> np.ndarray:
    std = np.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(dtype)


class Linear:
    """y = x @ w + b, x (B, In) -> (B, Out)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 dtype=np.float64):
        self.w = Param(he_normal(rng, (in_features, out_features), in_features, dtype))
        self.b = Param(np.zeros(out_features, dtype=dtype))
        self._x = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._x = x
        return x @ self.w.value + self.b.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.w.grad += self._x.T @ dy
        self.b.grad += dy.sum(axis=0)
        return dy @ self.w.value.T

    def named_params(self):
        return [("w", self.w), ("b", self.b)]


class Conv1d:
    """Same-length temporal conv; x (B, C, T) -> (B, F, T), kernel width odd."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator, dtype=np.float64):
        if kernel_size % 2 != 1:
            raise ValueError(f"kernel_size must be odd, got {kernel_size}")
        fan_in = kernel_size * in_channels
        self.w = Param(he_normal(rng, (out_channels, kernel_size, in_channels),
                                 fan_in, dtype))
        self.b = Param(np.zeros(out_channels, dtype=dtype))
        self._x = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._x = x
        return kernels.conv1d_forward(x, self.w.value, self.b.value)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx, dw, db = kernels.conv1d_backward(self._x, self.w.value, dy)
        self.w.grad += dw
        self.b.grad += db
        return dx

    def named_params(self):
        return [("w", self.w), ("b", self.b)]


class Conv2d:
    """Strided 2-D conv with half padding; x (B, C, H, W) -> (B, F, OH, OW)."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int, rng: np.random.Generator, dtype=np.float64):
        if kernel_size % 2 != 1:
            raise ValueError(f"kernel_size must be odd, got {kernel_size}")
        fan_in = kernel_size * kernel_size * in_channels
        self.w = Param(he_normal(rng, (out_channels, kernel_size, kernel_size,
                                       in_channels), fan_in, dtype))
        self.b = Param(np.zeros(out_channels, dtype=dtype))
        self.stride = stride
        self._x = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._x = x
        return kernels.conv2d_forward(x, self.w.value, self.b.value, self.stride)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx, dw, db = kernels.conv2d_backward(self._x, self.w.value, dy, self.stride)
        self.w.grad += dw
        self.b.grad += db
        return dx

    def named_params(self):
        return [("w", self.w), ("b", self.b)]


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.where(self._mask, dy, 0.0)

    def named_params(self):
        return []


# channel-wise sum-of-squares contractions keyed by input rank
_BN_SQ = {2: "nc,nc->c", 3: "nct,nct->c", 4: "nchw,nchw->c"}


class BatchNorm:
    """Per-channel batch normalization for (B, C), (B, C, T) or (B, C, H, W).

    Train mode normalizes with batch statistics (biased variance) and, unless
    ``update_running=False``, blends them into the running buffers with
    momentum 0.1.  Eval mode uses the running buffers.  Train mode requires
    batch size >= 2; a single-element batch has no variance to normalize by.
    """

    def __init__(self, num_channels: int, eps: float = 1e-5, momentum: float = 0.1,
                 dtype=np.float64):
        self.gamma = Param(np.ones(num_channels, dtype=dtype))
        self.beta = Param(np.zeros(num_channels, dtype=dtype))
        self.running_mean = np.zeros(num_channels, dtype=dtype)
        self.running_var = np.ones(num_channels, dtype=dtype)
        self.eps = eps
        self.momentum = momentum
        self._cache = None

    @staticmethod
    def _axes(x: np.ndarray):
        if x.ndim == 2:
            return (0,), x.shape[0]
        if x.ndim == 3:
            return (0, 2), x.shape[0] * x.shape[2]
        if x.ndim == 4:
            return (0, 2, 3), x.shape[0] * x.shape[2] * x.shape[3]
        raise ValueError(f"batchnorm input must be 2-D to 4-D, got shape {x.shape}")

    def _expand(self, v: np.ndarray, ndim: int) -> np.ndarray:
        return v.reshape((1, -1) + (1,) * (ndim - 2))

    def forward(self, x: np.ndarray, train: bool = False,
                update_running: bool = True) -> np.ndarray:
        axes, n = self._axes(x)
        if train:
            if x.shape[0] < 2:
                raise ValueError(
                    f"batchnorm needs batch size >= 2 in train mode, got {x.shape[0]}")
            mean = x.mean(axis=axes)
            xhat = x - self._expand(mean, x.ndim)
            # biased variance off the already-centered array, no second temp
            var = np.einsum(_BN_SQ[x.ndim], xhat, xhat) / n
            if update_running:
                # in place so external references to the buffers stay valid
                self.running_mean *= 1 - self.momentum
                self.running_mean += self.momentum * mean
                self.running_var *= 1 - self.momentum
                self.running_var += self.momentum * var
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat *= self._expand(inv_std, x.ndim)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = x - self._expand(self.running_mean, x.ndim)
            xhat *= self._expand(inv_std, x.ndim)
        self._cache = (xhat, inv_std, axes, n, train)
        y = xhat * self._expand(self.gamma.value, x.ndim)
        y += self._expand(self.beta.value, x.ndim)
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv_std, axes, n, train = self._cache
        ndim = dy.ndim
        dyx = dy * xhat
        s_dyx = dyx.sum(axis=axes)
        self.gamma.grad += s_dyx
        s_dy = dy.sum(axis=axes)
        self.beta.grad += s_dy
        g = self._expand(self.gamma.value * inv_std, ndim)
        if not train:
            dyx[:] = dy
            dyx *= g
            return dyx
        # batch stats depend on x, so the mean/var paths feed back; dyx's
        # buffer is dead after the sums, reuse it for the output
        np.multiply(xhat, self._expand(s_dyx / n, ndim), out=dyx)
        np.subtract(dy, dyx, out=dyx)
        dyx -= self._expand(s_dy / n, ndim)
        dyx *= g
        return dyx

    def named_params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def state_arrays(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def load_state(self, running_mean: np.ndarray, running_var: np.ndarray):
        self.running_mean[...] = running_mean
        self.running_var[...] = running_var


def mse(pred: np.ndarray, target: np.ndarray):
    """Mean squared error and its gradient wrt pred."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


def lr_schedule(base_lr: float, epoch: int) -> float:
    """Step decay: one decade down every 1000 epochs."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return base_lr * 0.1 ** (epoch // 1000)


class SGD:
    """Momentum SGD: v <- mu*v + g; p <- p - lr*v."""

    def __init__(self, params: list[Param], momentum: float = 0.9):
        self.params = list(params)
        self.momentum = momentum
        self.velocities = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad[...] = 0.0

    def step(self, lr: float, epoch: int = 0, batch: int = 0):
        for p, v in zip(self.params, self.velocities):
            if not np.all(np.isfinite(p.grad)):
                raise TrainingDiverged("non-finite gradient", epoch=epoch, batch=batch)
            v *= self.momentum
            v += p.grad
            p.value -= lr * v


def gradcheck(fn, params: list[Param], h: float = 1e-5,
              max_coords_per_param: int | None = None,
              rng: np.random.Generator | None = None) -> float:
    """Max relative error between ``Param.grad`` and central differences.

    ``fn()`` must recompute the scalar loss from the params' current values
    (same batch, batch-stat updates disabled).  Analytic gradients are taken
    from ``Param.grad`` as-is; populate them before calling.  Relative error
    per coordinate is |a - n| / max(|a|, |n|, 1e-6).
    """
    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        gflat = p.grad.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords_per_param is not None and flat.size > max_coords_per_param:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(flat.size, size=max_coords_per_param, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            fp = fn()
            flat[i] = orig - h
            fm = fn()
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            ana = gflat[i]
            rel = abs(ana - num) / max(abs(ana), abs(num), 1e-6)
            worst = max(worst, rel)
    return worst


# --- checkpoint file format --------------------------------------------------
#
#   magic "FSNCKPT1\n" | uint64-le header length | header JSON | raw arrays
#
# The header carries a version, the training config echo, free-form metadata,
# and an ordered array manifest (name, shape).  Arrays follow in manifest
# order as little-endian float64 C-order bytes.

CHECKPOINT_MAGIC = b"FSNCKPT1\n"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray],
                    config: dict, meta: dict) -> None:
    manifest = [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()]
    header = json.dumps({
        "version": CHECKPOINT_VERSION,
        "config": config,
        "meta": meta,
        "arrays": manifest,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path):
    """Returns (arrays, config, meta); arrays preserve manifest order."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if data[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:9]!r}")
    off = len(CHECKPOINT_MAGIC)
    if len(data) < off + 8:
        raise CheckpointError(f"{path}: truncated header length")
    (hlen,) = struct.unpack_from("<Q", data, off)
    off += 8
    if len(data) < off + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed header: {exc}") from exc
    off += hlen
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {header.get('version')!r}")
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if len(data) < off + nbytes:
            raise CheckpointError(f"{path}: truncated array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(
            data, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        off += nbytes
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    return arrays, header["config"], header["meta"]
