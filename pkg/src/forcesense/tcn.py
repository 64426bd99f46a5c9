"""Temporal block and joint training loop.

A window is 2n+1 consecutive per-frame features labeled by the middle
frame's force.  The temporal net applies stacked same-length 1-D
convolutions (each followed by batch norm and ReLU) across the window axis,
flattens, and regresses a scalar with a linear head.

Training optimizes encoders and temporal net jointly with momentum SGD on
MSE.  Windows overlap heavily (stride 1), so batches are built time-local:
sorted window centers are cut into consecutive chunks (random phase, chunk
order shuffled per epoch), letting one encoder pass over the union of frames
serve every window in the chunk.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .encoders import FeatureVector, PointEncoder, RgbEncoder
from .errors import CheckpointError, TrainingDiverged
from .nn_core import SGD, BatchNorm, Conv1d, Linear, Param, ReLU, lr_schedule, mse
from .pipeline import FrameDataset

VARIANTS = ("single_frame_rgb", "rgb_tcn", "pc_tcn", "rpc_tcn")


@dataclass(frozen=True)
class Window:
    """features rows are frames t-n .. t+n; label is fz at the center."""

    features: np.ndarray
    label: float
    center: int
    t: float = 0.0

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] % 2 != 1:
            raise ValueError(f"window features must be (2n+1, D), got "
                             f"{self.features.shape}")


def build_windows(features: list[FeatureVector], labels, n: int) -> list[Window]:
    """One window per center in [n, len-n-1]; boundaries emit nothing."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if len(features) != len(labels):
        raise ValueError(f"{len(features)} features vs {len(labels)} labels")
    width = 2 * n + 1
    if len(features) < width:
        raise ValueError(f"need at least {width} frames for n={n}, "
                         f"got {len(features)}")
    out = []
    for c in range(n, len(features) - n):
        mat = np.stack([features[i].values for i in range(c - n, c + n + 1)])
        out.append(Window(features=mat, label=float(labels[c]), center=c,
                          t=features[c].t))
    return out


class TemporalConvNet:
    """conv1d+BN+ReLU stack over the window axis, flatten, linear head.

    ``channels=()`` degenerates to a plain linear regression head on the
    flattened window (used by the single-frame baseline).
    """

    def __init__(self, rng: np.random.Generator, in_channels: int,
                 window_len: int, channels: tuple[int, ...] = (96, 64, 32),
                 kernel_size: int = 3, dtype=np.float64):
        self.in_channels = in_channels
        self.window_len = window_len
        self.channels = tuple(channels)
        self.convs: list[Conv1d] = []
        self.bns: list[BatchNorm] = []
        self.relus: list[ReLU] = []
        c = in_channels
        for f in self.channels:
            self.convs.append(Conv1d(c, f, kernel_size, rng=rng, dtype=dtype))
            self.bns.append(BatchNorm(f, dtype=dtype))
            self.relus.append(ReLU())
            c = f
        self._flat_shape = (c, window_len)
        self.head = Linear(c * window_len, 1, rng=rng, dtype=dtype)

    def forward(self, x: np.ndarray, train: bool = False,
                update_running: bool = True) -> np.ndarray:
        """x (B, D, T) -> predictions (B,)."""
        if x.ndim != 3 or x.shape[1] != self.in_channels or x.shape[2] != self.window_len:
            raise ValueError(f"expected (B, {self.in_channels}, {self.window_len}), "
                             f"got {x.shape}")
        h = x
        for conv, bn, relu in zip(self.convs, self.bns, self.relus):
            h = relu.forward(bn.forward(conv.forward(h, train), train,
                                        update_running), train)
        return self.head.forward(h.reshape(h.shape[0], -1), train)[:, 0]

    def backward(self, dpred: np.ndarray) -> np.ndarray:
        dh = self.head.backward(dpred[:, None])
        dh = dh.reshape((dh.shape[0],) + self._flat_shape)
        for conv, bn, relu in zip(reversed(self.convs), reversed(self.bns),
                                  reversed(self.relus)):
            dh = conv.backward(bn.backward(relu.backward(dh)))
        return dh

    def named_params(self):
        out = []
        for i, (conv, bn) in enumerate(zip(self.convs, self.bns)):
            out += [(f"conv{i}.{n}", p) for n, p in conv.named_params()]
            out += [(f"bn{i}.{n}", p) for n, p in bn.named_params()]
        out += [(f"head.{n}", p) for n, p in self.head.named_params()]
        return out

    def state_arrays(self):
        out = []
        for i, bn in enumerate(self.bns):
            out += [(f"bn{i}.{n}", a) for n, a in bn.state_arrays()]
        return out


def tcn_forward(batch: list[Window], model: TemporalConvNet,
                mode: str = "eval") -> np.ndarray:
    """Predictions for a batch of windows; train mode needs batch >= 2."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train|eval, got {mode!r}")
    if not batch:
        raise ValueError("empty batch")
    if mode == "train" and len(batch) < 2:
        raise ValueError("train mode needs a batch of at least 2 windows")
    x = np.ascontiguousarray(
        np.stack([w.features for w in batch]).transpose(0, 2, 1))
    return model.forward(x, train=(mode == "train"))


def predict(model: TemporalConvNet, feature_sequence: list[FeatureVector],
            n: int, batch_size: int = 256) -> list[tuple[float, float]]:
    """Sliding-window eval-mode predictions: (center timestamp, prediction).

    Output length is len(feature_sequence) - 2n, time-ordered.
    """
    if 2 * n + 1 != model.window_len:
        raise ValueError(f"model window {model.window_len} vs n={n}")
    windows = build_windows(feature_sequence,
                            [0.0] * len(feature_sequence), n)
    out: list[tuple[float, float]] = []
    for i in range(0, len(windows), batch_size):
        chunk = windows[i:i + batch_size]
        preds = tcn_forward(chunk, model, mode="eval")
        out.extend((w.t, float(p)) for w, p in zip(chunk, preds))
    return out


# --- full model: encoders + temporal net -------------------------------------

@dataclass(frozen=True)
class ModelConfig:
    variant: str = "rpc_tcn"
    n: int = 7
    rgb_hw: tuple[int, int] = (32, 32)
    rgb_channels: tuple[int, ...] = (8, 16)
    rgb_features: int = 64
    pc_points: int = 256
    pc_mlp: tuple[int, ...] = (16, 32)
    pc_features: int = 32
    tcn_channels: tuple[int, ...] = (96, 64, 32)
    tcn_kernel: int = 3
    dtype: str = "float64"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.n < 0:
            raise ValueError(f"n must be >= 0, got {self.n}")


class ForceModel:
    """The selected encoders plus the temporal net, trained jointly.

    Variants: rpc_tcn uses both encoders; rgb_tcn / pc_tcn use one;
    single_frame_rgb uses the RGB encoder with a width-1 window and a bare
    linear head (no temporal conv layers).
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        self.variant = config.variant
        single = config.variant == "single_frame_rgb"
        self.n = 0 if single else config.n
        self.uses_rgb = config.variant in ("single_frame_rgb", "rgb_tcn", "rpc_tcn")
        self.uses_pc = config.variant in ("pc_tcn", "rpc_tcn")
        dtype = np.dtype(config.dtype).type
        self.rgb_enc = RgbEncoder(rng, in_hw=config.rgb_hw,
                                  channels=config.rgb_channels,
                                  out_features=config.rgb_features,
                                  dtype=dtype) if self.uses_rgb else None
        self.pc_enc = PointEncoder(rng, num_points=config.pc_points,
                                   mlp=config.pc_mlp,
                                   out_features=config.pc_features,
                                   dtype=dtype) if self.uses_pc else None
        self.feature_width = ((config.rgb_features if self.uses_rgb else 0)
                              + (config.pc_features if self.uses_pc else 0))
        self.tcn = TemporalConvNet(rng, self.feature_width, 2 * self.n + 1,
                                   channels=() if single else config.tcn_channels,
                                   kernel_size=config.tcn_kernel, dtype=dtype)

    def encode_frames(self, rgb: np.ndarray, points: np.ndarray,
                      train: bool = False, update_running: bool = True) -> np.ndarray:
        parts = []
        if self.uses_rgb:
            parts.append(self.rgb_enc.forward(rgb, train, update_running))
        if self.uses_pc:
            parts.append(self.pc_enc.forward(points, train, update_running))
        return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)

    def encoders_backward(self, dfeat: np.ndarray) -> None:
        if self.uses_rgb and self.uses_pc:
            w = self.config.rgb_features
            self.rgb_enc.backward(dfeat[:, :w])
            self.pc_enc.backward(np.ascontiguousarray(dfeat[:, w:]))
        elif self.uses_rgb:
            self.rgb_enc.backward(dfeat)
        else:
            self.pc_enc.backward(dfeat)

    def named_params(self) -> list[tuple[str, Param]]:
        out = []
        if self.rgb_enc is not None:
            out += [(f"rgb.{n}", p) for n, p in self.rgb_enc.named_params()]
        if self.pc_enc is not None:
            out += [(f"pc.{n}", p) for n, p in self.pc_enc.named_params()]
        out += [(f"tcn.{n}", p) for n, p in self.tcn.named_params()]
        return out

    def params(self) -> list[Param]:
        return [p for _, p in self.named_params()]

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        if self.rgb_enc is not None:
            out += [(f"rgb.{n}", a) for n, a in self.rgb_enc.state_arrays()]
        if self.pc_enc is not None:
            out += [(f"pc.{n}", a) for n, a in self.pc_enc.state_arrays()]
        out += [(f"tcn.{n}", a) for n, a in self.tcn.state_arrays()]
        return out

    def export_arrays(self) -> dict[str, np.ndarray]:
        out = {name: p.value.copy() for name, p in self.named_params()}
        out.update({f"state.{name}": a.copy() for name, a in self.state_arrays()})
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.named_params():
            if name not in arrays:
                raise CheckpointError(f"checkpoint missing parameter {name!r}")
            if tuple(arrays[name].shape) != tuple(p.value.shape):
                raise CheckpointError(
                    f"shape mismatch for {name!r}: checkpoint "
                    f"{arrays[name].shape} vs model {p.value.shape}")
            p.value[...] = arrays[name]
        for name, a in self.state_arrays():
            key = f"state.{name}"
            if key not in arrays:
                raise CheckpointError(f"checkpoint missing state {key!r}")
            if tuple(arrays[key].shape) != tuple(a.shape):
                raise CheckpointError(
                    f"shape mismatch for {key!r}: checkpoint "
                    f"{arrays[key].shape} vs model {a.shape}")
            a[...] = arrays[key]


# --- window sets over a frame dataset ----------------------------------------

@dataclass(frozen=True)
class WindowSet:
    """Windows referenced by center index into a shared FrameDataset.

    Keeping centers instead of materialized feature windows lets training
    re-encode frames as encoder weights move, and lets overlapping windows
    share one encoding per frame.
    """

    dataset: FrameDataset
    centers: np.ndarray
    n: int

    def __post_init__(self):
        c = self.centers
        if c.ndim != 1:
            raise ValueError("centers must be 1-D")
        if len(c) and (c.min() < self.n or c.max() >= len(self.dataset) - self.n):
            raise ValueError("window centers out of range for this n")

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def labels(self) -> np.ndarray:
        return self.dataset.fz[self.centers]


def _gather_windows(model: ForceModel, ds: FrameDataset, centers: np.ndarray,
                    train: bool, frame_chunk: int = 512):
    """Encode the union of frames once, then assemble (B, D, T) windows."""
    offs = np.arange(-model.n, model.n + 1)
    fidx = centers[:, None] + offs[None, :]
    uniq, inv = np.unique(fidx.ravel(), return_inverse=True)
    if train or len(uniq) <= frame_chunk:
        feats = model.encode_frames(ds.rgb[uniq], ds.points[uniq], train)
    else:
        feats = np.vstack([
            model.encode_frames(ds.rgb[uniq[i:i + frame_chunk]],
                                ds.points[uniq[i:i + frame_chunk]], False)
            for i in range(0, len(uniq), frame_chunk)])
    B, T = fidx.shape
    x = np.ascontiguousarray(
        feats[inv].reshape(B, T, -1).transpose(0, 2, 1))
    return x, uniq, inv


def _scatter_feature_grads(dx: np.ndarray, inv: np.ndarray,
                           num_unique: int) -> np.ndarray:
    """Sum window-frame gradients (B, D, T) back onto unique frames."""
    B, D, T = dx.shape
    rows = dx.transpose(0, 2, 1).reshape(B * T, D)
    out = np.zeros((num_unique, D), dtype=dx.dtype)
    np.add.at(out, inv, rows)
    return out


def predict_windowset(model: ForceModel, ws: WindowSet,
                      window_chunk: int = 1024) -> np.ndarray:
    """Eval-mode predictions for every window in the set, in centers order."""
    preds = np.empty(len(ws), dtype=np.float64)
    for i in range(0, len(ws), window_chunk):
        centers = ws.centers[i:i + window_chunk]
        x, _, _ = _gather_windows(model, ws.dataset, centers, train=False)
        preds[i:i + len(centers)] = model.tcn.forward(x, train=False)
    return preds


def _time_local_batches(centers: np.ndarray, batch_size: int,
                        rng: np.random.Generator) -> list[np.ndarray]:
    """Consecutive chunks of sorted centers, random phase, shuffled order.

    Chunks of overlapping windows share most of their frames, so one encoder
    pass covers the whole chunk.  Every chunk has >= 2 windows (train-mode
    batch norm needs it); the random phase moves chunk boundaries each epoch.
    """
    if batch_size < 2:
        raise ValueError(f"batch_size must be >= 2, got {batch_size}")
    s = np.sort(centers)
    if len(s) < 2:
        raise ValueError("need at least 2 training windows")
    phase = int(rng.integers(0, batch_size))
    cuts = list(range(phase if phase > 0 else batch_size, len(s), batch_size))
    chunks = np.split(s, cuts)
    chunks = [c for c in chunks if len(c)]
    # merge singleton head/tail into a neighbor
    merged: list[np.ndarray] = []
    for c in chunks:
        if merged and (len(c) < 2 or len(merged[-1]) < 2):
            merged[-1] = np.concatenate([merged[-1], c])
        else:
            merged.append(c)
    if len(merged) > 1 and len(merged[0]) < 2:
        merged[1] = np.concatenate([merged[0], merged[1]])
        merged = merged[1:]
    order = rng.permutation(len(merged))
    return [merged[i] for i in order]


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 50
    batch_size: int = 32
    base_lr: float = 1e-3
    momentum: float = 0.9
    deterministic: bool = False


@dataclass
class TrainResult:
    model: ForceModel
    history: list[dict]
    best_epoch: int
    best_val_mse: float
    epochs_trained: int
    velocities: list[np.ndarray]


def mse_on_windowset(model: ForceModel, ws: WindowSet) -> float:
    loss, _ = mse(predict_windowset(model, ws), ws.labels)
    return loss


def train(train_windows: WindowSet, val_windows: WindowSet, config: TrainConfig,
          seed: int, resume_arrays: dict | None = None,
          resume_meta: dict | None = None) -> TrainResult:
    """Joint minibatch SGD on MSE; returns the best-validation snapshot.

    History rows: epoch, lr, train_mse, val_mse, wall_seconds (0.0 in
    deterministic mode so reruns are byte-identical).  With ``resume_*`` the
    epoch counter and LR schedule continue where the checkpoint stopped.
    """
    if len(train_windows) == 0 or len(val_windows) == 0:
        raise ValueError("train and val window sets must be non-empty")
    if train_windows.n != val_windows.n:
        raise ValueError("train/val window half-widths differ")
    if config.epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {config.epochs}")
    model = ForceModel(config.model, np.random.default_rng([seed, 0]))
    if train_windows.n != model.n:
        raise ValueError(f"window set n={train_windows.n} but model n={model.n}")
    params = model.params()
    opt = SGD(params, momentum=config.momentum)
    start_epoch = 0
    if resume_arrays is not None:
        model.load_arrays(resume_arrays)
        names = [name for name, _ in model.named_params()]
        for i, name in enumerate(names):
            key = f"opt.{name}"
            if key in resume_arrays:
                opt.velocities[i][...] = resume_arrays[key]
        start_epoch = int((resume_meta or {}).get("epochs_trained", 0))

    ds = train_windows.dataset
    labels_all = ds.fz
    history: list[dict] = []
    best_val = np.inf
    best_epoch = -1
    best_arrays: dict | None = None
    best_velocities: list[np.ndarray] | None = None

    for epoch in range(start_epoch, start_epoch + config.epochs):
        t0 = time.perf_counter()
        lr = lr_schedule(config.base_lr, epoch)
        erng = np.random.default_rng([seed, 1, epoch])
        total_loss = 0.0
        total_count = 0
        for bi, centers in enumerate(
                _time_local_batches(train_windows.centers, config.batch_size, erng)):
            x, uniq, inv = _gather_windows(model, ds, centers, train=True)
            preds = model.tcn.forward(x, train=True)
            loss, dpred = mse(preds, labels_all[centers].astype(preds.dtype))
            if not np.isfinite(loss):
                raise TrainingDiverged("non-finite loss", epoch=epoch, batch=bi)
            total_loss += loss * len(centers)
            total_count += len(centers)
            opt.zero_grad()
            dx = model.tcn.backward(dpred)
            model.encoders_backward(_scatter_feature_grads(dx, inv, len(uniq)))
            opt.step(lr, epoch=epoch, batch=bi)
        val_mse = mse_on_windowset(model, val_windows)
        wall = 0.0 if config.deterministic else time.perf_counter() - t0
        history.append({
            "epoch": epoch,
            "lr": lr,
            "train_mse": total_loss / total_count,
            "val_mse": val_mse,
            "wall_seconds": wall,
        })
        if val_mse < best_val:
            best_val = val_mse
            best_epoch = epoch
            best_arrays = model.export_arrays()
            best_velocities = [v.copy() for v in opt.velocities]

    model.load_arrays(best_arrays)
    return TrainResult(model=model, history=history, best_epoch=best_epoch,
                       best_val_mse=best_val,
                       epochs_trained=start_epoch + config.epochs,
                       velocities=best_velocities)
