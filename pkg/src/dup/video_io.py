"""Frame-sequence storage (binary PGM) and report CSVs.

A frame is a 2-D ``float64`` array with values in [0, 1]; a clip is an ordered
stack of equally sized frames.
"""

from __future__ import annotations

import csv
import math
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from dup.engine import RestorationReport

FRAME_PATTERN = re.compile(r"^frame_(\d{6})\.pgm$")
REPORT_HEADER = ["frame_index", "iterations", "final_loss", "psnr_db", "ssim", "wall_ms"]


class DataError(ValueError):
    """Malformed or incompatible input data."""


def as_frame(pixels, name: str = "frame") -> np.ndarray:
    """Validate a 2-D unit-interval grid and return it as float64."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise DataError(f"{name}: expected a non-empty 2-D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise DataError(f"{name}: pixel values must lie in [0, 1]")
    return arr


@dataclass(frozen=True)
class VideoClip:
    frames: np.ndarray  # (T, H, W)

    def __post_init__(self):
        arr = np.asarray(self.frames, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
            raise DataError(f"clip must be a non-empty (T, H, W) stack, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise DataError("clip pixel values must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "frames", arr)

    @classmethod
    def from_frames(cls, frames) -> "VideoClip":
        frames = list(frames)
        if not frames:
            raise DataError("clip must contain at least one frame")
        shapes = {np.shape(f) for f in frames}
        if len(shapes) != 1:
            raise DataError(f"all frames must share one shape, got {sorted(shapes)}")
        return cls(np.stack([np.asarray(f, dtype=np.float64) for f in frames]))

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]

    def __len__(self) -> int:
        return self.frame_count

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, t: int) -> np.ndarray:
        return self.frames[t]


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # Skips whitespace and '#' comments, returns the next header token.
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    return data[start:pos], pos


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM as a float64 frame scaled by its maxval."""
    path = Path(path)
    data = path.read_bytes()
    try:
        magic, pos = _read_token(data, 0)
        if magic != b"P5":
            raise ValueError(f"bad magic {magic!r}")
        width_tok, pos = _read_token(data, pos)
        height_tok, pos = _read_token(data, pos)
        maxval_tok, pos = _read_token(data, pos)
        width, height, maxval = int(width_tok), int(height_tok), int(maxval_tok)
    except ValueError as exc:
        raise DataError(f"{path.name}: malformed PGM header ({exc})") from None
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise DataError(f"{path.name}: malformed PGM header (size {width}x{height}, maxval {maxval})")
    pos += 1  # single whitespace byte ends the header
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    payload = data[pos : pos + count * dtype.itemsize]
    if len(payload) != count * dtype.itemsize:
        raise DataError(f"{path.name}: truncated pixel data")
    samples = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    if samples.max(initial=0) > maxval:
        raise DataError(f"{path.name}: sample exceeds maxval {maxval}")
    return samples.astype(np.float64) / maxval


def quantize(frame: np.ndarray, bit_depth: int) -> np.ndarray:
    """Round-half-up quantization of [0, 1] values to integer samples."""
    maxval = (1 << bit_depth) - 1
    return np.floor(np.asarray(frame, dtype=np.float64) * maxval + 0.5).astype(np.int64)


def write_pgm(path, frame: np.ndarray, bit_depth: int = 8) -> None:
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    frame = as_frame(frame)
    maxval = (1 << bit_depth) - 1
    samples = quantize(frame, bit_depth)
    dtype = ">u2" if bit_depth == 16 else "u1"
    header = f"P5\n{frame.shape[1]} {frame.shape[0]}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + samples.astype(dtype).tobytes())


def frame_path(directory, index: int) -> Path:
    """Path of the 1-based frame ``index`` inside ``directory``."""
    return Path(directory) / f"frame_{index:06d}.pgm"


def load_clip(path) -> VideoClip:
    """Load ``frame_%06d.pgm`` files (contiguous indices from 000001)."""
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"{path}: not a directory")
    indexed = []
    for entry in os.listdir(path):
        m = FRAME_PATTERN.match(entry)
        if m:
            indexed.append((int(m.group(1)), entry))
    if not indexed:
        raise DataError(f"{path}: no frame_%06d.pgm files found")
    indexed.sort()
    indices = [i for i, _ in indexed]
    if len(set(indices)) != len(indices):
        raise DataError(f"{path}: duplicate frame indices")
    for expected, (index, name) in enumerate(indexed, start=1):
        if index != expected:
            raise DataError(f"{path}: non-contiguous frame indices, expected frame_{expected:06d}.pgm before {name}")
    frames = []
    for _, name in indexed:
        frame = read_pgm(path / name)
        if frames and frame.shape != frames[0].shape:
            raise DataError(f"{name}: dimensions {frame.shape} differ from {frames[0].shape}")
        frames.append(frame)
    return VideoClip(np.stack(frames))


def save_clip(clip: VideoClip, path, bit_depth: int = 8) -> None:
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    if not isinstance(clip, VideoClip):
        clip = VideoClip.from_frames(clip)
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(clip.frames, start=1):
        write_pgm(frame_path(path, t), frame, bit_depth)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def _finite_mean(values):
    kept = [v for v in values if v is not None and math.isfinite(v)]
    return sum(kept) / len(kept) if kept else None


def report_rows(report: "RestorationReport") -> list[list[str]]:
    rows = []
    for rec in report.records:
        rows.append(
            [
                _fmt(rec.frame_index),
                _fmt(rec.iterations),
                _fmt(float(rec.final_loss)),
                _fmt(None if rec.psnr_db is None else float(rec.psnr_db)),
                _fmt(None if rec.ssim is None else float(rec.ssim)),
                _fmt(float(rec.wall_ms)),
            ]
        )
    recs = report.records
    rows.append(
        [
            "ALL",
            _fmt(_finite_mean([float(r.iterations) for r in recs])),
            _fmt(_finite_mean([r.final_loss for r in recs])),
            _fmt(_finite_mean([r.psnr_db for r in recs])),
            _fmt(_finite_mean([r.ssim for r in recs])),
            _fmt(_finite_mean([r.wall_ms for r in recs])),
        ]
    )
    return rows


def write_report(report: "RestorationReport", path) -> None:
    """Write one CSV row per frame plus an ``ALL`` row holding the means.

    Missing metrics are written as empty fields; infinite PSNRs are excluded
    from the summary mean.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        writer.writerows(report_rows(report))


def read_report(path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
