"""Radar frame pipeline: decoding, resizing, sequence building, synthetic data.

Frames carry normalized reflectivity in [0,1] as [1,h,w] float32 arrays.
Every stage preserves that range. Sequences pair input_frames of context with
output_frames of targets, built only from gapless windows at the configured
cadence; gaps are never interpolated across.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FrameRangeError, MalformedFrameError, ShapeMismatchError

RFRM_MAGIC = b"RFRM"
RFRM_VERSION = 1
_RFRM_HEADER = struct.Struct("<4sHIIq")

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


@dataclass
class RadarFrame:
    timestamp: datetime
    values: np.ndarray  # [1, h, w] in [0, 1]
    source: str = "file"  # live | file | synthetic

    def __post_init__(self):
        if self.values.ndim == 2:
            self.values = self.values[None]
        if self.values.ndim != 3 or self.values.shape[0] != 1:
            raise ShapeMismatchError(f"frame values must be [1,h,w], got {self.values.shape}")

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def key(self) -> tuple:
        """Frame identity for train/val disjointness checks."""
        return (self.source, self.timestamp)


@dataclass
class SequenceSample:
    x_frames: list[RadarFrame]
    y_frames: list[RadarFrame]
    provenance: str = ""
    warnings: list[str] = field(default_factory=list)

    @property
    def start_time(self) -> datetime:
        return self.x_frames[0].timestamp

    def frame_keys(self) -> set:
        return {f.key() for f in self.x_frames} | {f.key() for f in self.y_frames}

    def x_array(self) -> np.ndarray:
        """[T, 1, h, w] float32 stack of the input frames."""
        return np.stack([f.values for f in self.x_frames]).astype(np.float32)

    def y_array(self) -> np.ndarray:
        return np.stack([f.values for f in self.y_frames]).astype(np.float32)


# ---------------------------------------------------------------------------
# Decoding / encoding


def decode_frame(data: bytes, fmt: str, timestamp: datetime | None = None,
                 source: str = "file") -> RadarFrame:
    """Decode one frame. ``gray-png8`` maps pixel v -> v/255; ``raw-f32``
    reads the RFRM container verbatim (timestamp comes from its header)."""
    if fmt == "gray-png8":
        try:
            img = Image.open(io.BytesIO(data))
            img.load()
        except Exception as exc:
            raise MalformedFrameError(f"bad PNG: {exc}") from exc
        arr = np.asarray(img.convert("L"), dtype=np.float32) / 255.0
        return RadarFrame(timestamp or EPOCH, arr[None], source=source)
    if fmt == "raw-f32":
        if len(data) < _RFRM_HEADER.size:
            raise MalformedFrameError(f"RFRM file too short: {len(data)} bytes")
        magic, version, h, w, ts = _RFRM_HEADER.unpack(data[: _RFRM_HEADER.size])
        if magic != RFRM_MAGIC:
            raise MalformedFrameError(f"bad RFRM magic {magic!r}")
        if version != RFRM_VERSION:
            raise MalformedFrameError(f"unsupported RFRM version {version}")
        payload = data[_RFRM_HEADER.size :]
        if len(payload) != 4 * h * w:
            raise MalformedFrameError(f"RFRM payload is {len(payload)} bytes, expected {4 * h * w}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(h, w).copy()
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise FrameRangeError("RFRM values outside [0,1]")
        return RadarFrame(EPOCH + timedelta(seconds=ts), arr[None], source=source)
    raise ValueError(f"unknown frame format {fmt!r}")


def encode_frame(frame: RadarFrame) -> bytes:
    """Serialize to the RFRM container (f32 LE row-major payload)."""
    ts = int((frame.timestamp - EPOCH).total_seconds())
    header = _RFRM_HEADER.pack(RFRM_MAGIC, RFRM_VERSION, frame.height, frame.width, ts)
    return header + np.ascontiguousarray(frame.values[0], dtype="<f4").tobytes()


def load_frame(path, timestamp: datetime | None = None) -> RadarFrame:
    path = Path(path)
    fmt = "raw-f32" if path.suffix == ".rfrm" else "gray-png8"
    return decode_frame(path.read_bytes(), fmt, timestamp=timestamp)


# ---------------------------------------------------------------------------
# Resize


def _box_weights(n_in: int, n_out: int) -> np.ndarray:
    """[n_out, n_in] area-overlap weights; each row sums to 1."""
    w = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / scale


def resize_area(frame: RadarFrame, out_h: int, out_w: int) -> RadarFrame:
    """Downsize by area-weighted averaging (box filter over fractional source
    rectangles). Output values stay inside the input's [min, max]."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output dims must be >= 1, got {out_h}x{out_w}")
    if out_h > frame.height or out_w > frame.width:
        raise ValueError(
            f"resize_area only downsizes: {frame.height}x{frame.width} -> {out_h}x{out_w}"
        )
    rows = _box_weights(frame.height, out_h)
    cols = _box_weights(frame.width, out_w)
    out = rows @ frame.values[0].astype(np.float64) @ cols.T
    return RadarFrame(frame.timestamp, out.astype(np.float32)[None], source=frame.source)


# ---------------------------------------------------------------------------
# Sequence construction


def build_sequences(
    frames: list[RadarFrame],
    cadence: timedelta = timedelta(minutes=5),
    stride: int = 1,
    input_frames: int = 18,
    output_frames: int = 18,
) -> list[SequenceSample]:
    """Slide a window of input_frames + output_frames over the frames,
    advancing by stride. A gap deviating more than 10% from the cadence
    breaks every window that spans it; no frames are fabricated."""
    window = input_frames + output_frames
    if len(frames) < window:
        return []
    tol = cadence * 0.1
    good_gap = [
        abs((frames[i + 1].timestamp - frames[i].timestamp) - cadence) <= tol
        for i in range(len(frames) - 1)
    ]
    samples = []
    for s in range(0, len(frames) - window + 1, stride):
        if all(good_gap[s : s + window - 1]):
            samples.append(
                SequenceSample(
                    x_frames=list(frames[s : s + input_frames]),
                    y_frames=list(frames[s + input_frames : s + window]),
                    provenance=f"window@{frames[s].timestamp.isoformat()}",
                )
            )
    return samples


# ---------------------------------------------------------------------------
# Synthetic advection data


@dataclass
class SynthConfig:
    """Gaussian blobs translating at constant velocity, rendered per frame.

    velocity is (vx, vy) in pixels/frame (x = width axis). boundary 'wrap'
    renders blobs on the torus (frame t+1 is an exact roll of frame t for
    integer velocities); 'clip' lets blobs leave the frame and flags the
    sample with a warning when one exits before the sequence ends.
    """

    frame_h: int = 16
    frame_w: int = 16
    n_blobs: int = 1
    amplitude: float = 1.0
    radius: float = 2.0
    velocity: tuple[float, float] = (1.0, 0.0)
    noise: float = 0.0
    seed: int = 0
    boundary: str = "wrap"
    input_frames: int = 18
    output_frames: int = 18
    cadence_minutes: int = 5
    start_time: datetime = datetime(2022, 1, 1, tzinfo=timezone.utc)

    def __post_init__(self):
        if not (0.0 < self.amplitude <= 1.0):
            raise ValueError(f"amplitude must be in (0,1], got {self.amplitude}")
        if self.boundary not in ("wrap", "clip"):
            raise ValueError(f"boundary must be 'wrap' or 'clip', got {self.boundary!r}")
        if self.n_blobs < 1 or self.radius <= 0:
            raise ValueError("need at least one blob with positive radius")


def _render_blobs(cfg: SynthConfig, centers: np.ndarray) -> np.ndarray:
    ys = np.arange(cfg.frame_h, dtype=np.float64)[:, None]
    xs = np.arange(cfg.frame_w, dtype=np.float64)[None, :]
    img = np.zeros((cfg.frame_h, cfg.frame_w))
    for cy, cx in centers:
        if cfg.boundary == "wrap":
            dy = (ys - cy + cfg.frame_h / 2) % cfg.frame_h - cfg.frame_h / 2
            dx = (xs - cx + cfg.frame_w / 2) % cfg.frame_w - cfg.frame_w / 2
        else:
            dy, dx = ys - cy, xs - cx
        img += cfg.amplitude * np.exp(-(dy * dy + dx * dx) / (2.0 * cfg.radius**2))
    return np.clip(img, 0.0, 1.0)


def synth_advection(cfg: SynthConfig, n_sequences: int) -> list[SequenceSample]:
    """Deterministic per seed. Sequence k starts one day after sequence k-1
    so ByTimeRange splits order them naturally."""
    rng = np.random.default_rng(cfg.seed)
    vx, vy = cfg.velocity
    total = cfg.input_frames + cfg.output_frames
    cadence = timedelta(minutes=cfg.cadence_minutes)
    samples = []
    for k in range(n_sequences):
        centers0 = np.stack(
            [
                rng.uniform(0, cfg.frame_h, size=cfg.n_blobs),
                rng.uniform(0, cfg.frame_w, size=cfg.n_blobs),
            ],
            axis=1,
        )
        t0 = cfg.start_time + timedelta(days=k)
        frames = []
        warnings = []
        for t in range(total):
            centers = centers0 + t * np.array([vy, vx])
            if cfg.boundary == "wrap":
                centers = centers % np.array([cfg.frame_h, cfg.frame_w])
            else:
                out_y = (centers[:, 0] < -3 * cfg.radius) | (centers[:, 0] > cfg.frame_h + 3 * cfg.radius)
                out_x = (centers[:, 1] < -3 * cfg.radius) | (centers[:, 1] > cfg.frame_w + 3 * cfg.radius)
                if np.any(out_y | out_x) and not warnings:
                    warnings.append(f"blob exits frame at step {t} under clip boundary")
            img = _render_blobs(cfg, centers)
            if cfg.noise > 0:
                img = np.clip(img + cfg.noise * rng.standard_normal(img.shape), 0.0, 1.0)
            frames.append(
                RadarFrame(t0 + t * cadence, img.astype(np.float32)[None], source="synthetic")
            )
        samples.append(
            SequenceSample(
                x_frames=frames[: cfg.input_frames],
                y_frames=frames[cfg.input_frames :],
                provenance=f"synth seed={cfg.seed} seq={k}",
                warnings=warnings,
            )
        )
    return samples


# ---------------------------------------------------------------------------
# Splitting


def split_train_val(
    samples: list[SequenceSample],
    val_fraction: float,
    policy: str = "by-time",
    seed: int = 0,
) -> tuple[list[SequenceSample], list[SequenceSample]]:
    """Disjoint train/validation split. 'by-time' puts the chronologically
    latest fraction in validation; 'random' shuffles with the seed. Train
    samples sharing any underlying frame with validation are dropped, so
    disjointness holds at the frame level."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in (0,1), got {val_fraction}")
    n = len(samples)
    n_val = int(round(n * val_fraction))
    if n_val < 1 or n_val >= n:
        raise ValueError(f"cannot split {n} samples with val_fraction {val_fraction}")
    if policy == "by-time":
        ordered = sorted(samples, key=lambda s: s.start_time)
    elif policy == "random":
        ordered = list(samples)
        np.random.default_rng(seed).shuffle(ordered)
    else:
        raise ValueError(f"unknown split policy {policy!r}")
    val = ordered[n - n_val :]
    val_keys = set().union(*(s.frame_keys() for s in val))
    train = [s for s in ordered[: n - n_val] if not (s.frame_keys() & val_keys)]
    if not train:
        raise ValueError("no training samples left after enforcing frame-level disjointness")
    return train, val


# ---------------------------------------------------------------------------
# Dataset directories (RFRM files, one subdirectory per sequence)


def save_dataset(samples: list[SequenceSample], root) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for k, sample in enumerate(samples):
        d = root / f"seq_{k:04d}"
        d.mkdir(exist_ok=True)
        for i, frame in enumerate(sample.x_frames + sample.y_frames):
            (d / f"frame_{i:02d}.rfrm").write_bytes(encode_frame(frame))


def load_dataset(root, input_frames: int = 18, output_frames: int = 18) -> list[SequenceSample]:
    root = Path(root)
    samples = []
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        frames = [load_frame(p) for p in sorted(d.glob("frame_*.rfrm"))]
        if len(frames) != input_frames + output_frames:
            raise ValueError(
                f"{d}: expected {input_frames + output_frames} frames, found {len(frames)}"
            )
        samples.append(
            SequenceSample(
                x_frames=frames[:input_frames],
                y_frames=frames[input_frames:],
                provenance=str(d),
            )
        )
    return samples
