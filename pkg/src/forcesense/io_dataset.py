"""On-disk dataset format, stream loading, timestamp synchronization, splits.

A dataset is a directory holding ``manifest.jsonl`` plus a ``frames/``
subdirectory.  The manifest has one JSON object per line:

    {"kind": "rgb",   "t": <seconds>, "file": "frames/rgb_000001.ppm"}
    {"kind": "depth", "t": <seconds>, "file": "frames/depth_000001.pgm"}
    {"kind": "force", "t": <seconds>, "fz": <newtons>}

RGB frames are binary PPM (P6, maxval 255); depth frames are binary PGM
(P5, maxval 65535, big-endian, one count per millimeter).  Timestamps must
be strictly increasing within each stream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError

DEFAULT_SYNC_TOLERANCE_S = 0.010

STREAM_KINDS = ("rgb", "depth", "force")


@dataclass(frozen=True)
class RgbImage:
    """8-bit three-channel image; pixels has shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"rgb pixels must be (H, W, 3), got {p.shape}")
        if p.dtype != np.uint8:
            raise ValueError(f"rgb pixels must be uint8, got {p.dtype}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class DepthImage:
    """Depth in millimeters; zero marks an invalid pixel. Shape (H, W)."""

    depth_mm: np.ndarray

    def __post_init__(self):
        d = self.depth_mm
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"depth must be (H, W), got {d.shape}")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("depth values must be finite and >= 0")

    @property
    def height(self) -> int:
        return self.depth_mm.shape[0]

    @property
    def width(self) -> int:
        return self.depth_mm.shape[1]


@dataclass(frozen=True)
class StreamRecord:
    kind: str
    t: float
    file: str | None = None  # rgb/depth payload, relative to the dataset dir
    fz: float | None = None  # force payload, newtons


@dataclass(frozen=True)
class SyncedFrame:
    """One time-aligned observation; ``t`` is the RGB (pivot) timestamp."""

    t: float
    rgb: StreamRecord
    depth: StreamRecord
    force: StreamRecord

    @property
    def fz(self) -> float:
        return self.force.fz


@dataclass(frozen=True)
class DatasetSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int


@dataclass
class Streams:
    rgb: list[StreamRecord] = field(default_factory=list)
    depth: list[StreamRecord] = field(default_factory=list)
    force: list[StreamRecord] = field(default_factory=list)


def read_manifest(path: str | Path) -> Streams:
    """Parse manifest.jsonl into three time-ordered streams.

    Raises DatasetError with a line number on malformed lines, and on
    non-monotone timestamps (naming the stream and record index).
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"manifest not found: {path}")
    streams = Streams()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise DatasetError(f"{path}:{lineno}: expected an object")
            kind = obj.get("kind")
            if kind not in STREAM_KINDS:
                raise DatasetError(f"{path}:{lineno}: unknown kind {kind!r}")
            t = obj.get("t")
            if not isinstance(t, (int, float)) or not math.isfinite(t):
                raise DatasetError(f"{path}:{lineno}: bad timestamp {t!r}")
            if kind == "force":
                fz = obj.get("fz")
                if not isinstance(fz, (int, float)) or not math.isfinite(fz):
                    raise DatasetError(f"{path}:{lineno}: force record needs finite fz")
                rec = StreamRecord(kind=kind, t=float(t), fz=float(fz))
            else:
                file = obj.get("file")
                if not isinstance(file, str) or not file:
                    raise DatasetError(f"{path}:{lineno}: {kind} record needs a file")
                rec = StreamRecord(kind=kind, t=float(t), file=file)
            getattr(streams, kind).append(rec)
    for kind in STREAM_KINDS:
        recs = getattr(streams, kind)
        for i in range(1, len(recs)):
            if not recs[i].t > recs[i - 1].t:
                raise DatasetError(
                    f"{path}: non-monotone timestamps in {kind} stream at record {i}: "
                    f"{recs[i - 1].t} -> {recs[i].t}")
    return streams


def _nearest(ts: np.ndarray, t: float) -> int:
    """Index of the timestamp in sorted ts nearest to t (lowest on ties)."""
    j = int(np.searchsorted(ts, t))
    if j == 0:
        return 0
    if j == len(ts):
        return len(ts) - 1
    return j - 1 if (t - ts[j - 1]) <= (ts[j] - t) else j


def synchronize(rgb: list[StreamRecord], depth: list[StreamRecord],
                force: list[StreamRecord],
                tolerance: float = DEFAULT_SYNC_TOLERANCE_S) -> list[SyncedFrame]:
    """Attach the nearest-in-time depth and force record to each RGB record.

    An RGB frame is kept only when both nearest matches lie within
    ``tolerance`` seconds; otherwise it is dropped.  Nearest-sample matching,
    no interpolation.  The dropped count is ``len(rgb) - len(result)``.
    """
    for name, stream in (("rgb", rgb), ("depth", depth), ("force", force)):
        if not stream:
            raise ValueError(f"{name} stream is empty")
        ts = [r.t for r in stream]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"{name} stream timestamps are not strictly increasing")
    dts = np.array([r.t for r in depth])
    fts = np.array([r.t for r in force])
    out: list[SyncedFrame] = []
    for r in rgb:
        di = _nearest(dts, r.t)
        fi = _nearest(fts, r.t)
        if abs(dts[di] - r.t) <= tolerance and abs(fts[fi] - r.t) <= tolerance:
            out.append(SyncedFrame(t=r.t, rgb=r, depth=depth[di], force=force[fi]))
    return out


def split_dataset(num_frames: int, seed: int) -> DatasetSplit:
    """Random 80/5/15 split with floor sizing and the remainder to test.

    Sizes are floor(0.80 N) / floor(0.05 N) / remainder; deterministic for a
    given seed.  Requires at least 20 frames so the 5% bucket is non-empty.
    """
    if num_frames < 20:
        raise ValueError(f"need at least 20 frames to split, got {num_frames}")
    n_train = int(num_frames * 80 // 100)
    n_val = int(num_frames * 5 // 100)
    perm = np.random.default_rng(seed).permutation(num_frames)
    return DatasetSplit(
        train=np.sort(perm[:n_train]),
        val=np.sort(perm[n_train:n_train + n_val]),
        test=np.sort(perm[n_train + n_val:]),
        seed=seed,
    )


# --- netpbm readers/writers ------------------------------------------------
#
# Canonical headers are written as b"P6\n<w> <h>\n<maxval>\n"; readers accept
# any whitespace and '#' comments in the header but reject wrong magic, wrong
# maxval, truncated payloads, and trailing bytes.

def _read_pnm_tokens(data: bytes, path, count: int) -> tuple[list[int], int]:
    """Read `count` whitespace-separated integer header tokens after the magic.

    Returns (tokens, offset_past_single_whitespace_after_last_token).
    """
    tokens: list[int] = []
    i = 2  # past the 2-byte magic
    while len(tokens) < count:
        if i >= len(data):
            raise DatasetError(f"{path}: truncated header")
        c = data[i:i + 1]
        if c == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        if c.isspace():
            i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
            j += 1
        tok = data[i:j]
        if not tok.isdigit():
            raise DatasetError(f"{path}: bad header token {tok!r}")
        tokens.append(int(tok))
        i = j
    if i >= len(data) or not data[i:i + 1].isspace():
        raise DatasetError(f"{path}: missing whitespace after header")
    return tokens, i + 1


def read_ppm(path: str | Path) -> RgbImage:
    """Read a binary PPM (P6, maxval 255)."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] != b"P6":
        raise DatasetError(f"{path}: not a binary PPM (magic {data[:2]!r})")
    (w, h, maxval), off = _read_pnm_tokens(data, path, 3)
    if w < 1 or h < 1:
        raise DatasetError(f"{path}: bad dimensions {w}x{h}")
    if maxval != 255:
        raise DatasetError(f"{path}: unsupported maxval {maxval} (need 255)")
    need = w * h * 3
    payload = data[off:]
    if len(payload) < need:
        raise DatasetError(f"{path}: truncated pixel data ({len(payload)} < {need})")
    if len(payload) > need:
        raise DatasetError(f"{path}: {len(payload) - need} trailing bytes")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return RgbImage(pixels=pixels.copy())


def write_ppm(img: RgbImage, path: str | Path) -> None:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.pixels.tobytes())


def read_pgm16(path: str | Path) -> DepthImage:
    """Read a binary PGM (P5, maxval 65535, big-endian); values are mm."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] != b"P5":
        raise DatasetError(f"{path}: not a binary PGM (magic {data[:2]!r})")
    (w, h, maxval), off = _read_pnm_tokens(data, path, 3)
    if w < 1 or h < 1:
        raise DatasetError(f"{path}: bad dimensions {w}x{h}")
    if maxval != 65535:
        raise DatasetError(f"{path}: unsupported maxval {maxval} (need 65535)")
    need = w * h * 2
    payload = data[off:]
    if len(payload) < need:
        raise DatasetError(f"{path}: truncated pixel data ({len(payload)} < {need})")
    if len(payload) > need:
        raise DatasetError(f"{path}: {len(payload) - need} trailing bytes")
    vals = np.frombuffer(payload, dtype=">u2").reshape(h, w)
    return DepthImage(depth_mm=vals.astype(np.float64))


def write_pgm16(img: DepthImage, path: str | Path) -> None:
    vals = img.depth_mm
    rounded = np.rint(vals)
    if not np.array_equal(rounded, vals):
        raise ValueError("depth values must be integral millimeters for PGM16")
    if np.any(vals > 65535):
        raise ValueError("depth value exceeds 65535 mm")
    header = f"P5\n{img.width} {img.height}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + vals.astype(">u2").tobytes())
