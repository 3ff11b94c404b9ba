"""Measurement operator, resampling kernels, noise and the synthetic phantom.

Every resampling step is separable, so it is stored as a pair of 1-D matrices
and applied as ``R_rows @ X @ R_cols.T``. The adjoint of the degradation is then
the transposed pair, which keeps boundary handling exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.ndimage import gaussian_filter

from dup.video_io import DataError, VideoClip

# Stream tags keep independent random draws from colliding for one seed.
NOISE_STREAM = 0x6E6F6973
PHANTOM_STREAM = 0x7068616E


@dataclass(frozen=True)
class DegradationModel:
    scale: int = 4
    lanczos_a: int = 3
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if int(self.scale) != self.scale or self.scale < 1:
            raise ValueError(f"scale must be a positive integer, got {self.scale}")
        if int(self.lanczos_a) != self.lanczos_a or self.lanczos_a < 1:
            raise ValueError(f"lanczos_a must be a positive integer, got {self.lanczos_a}")
        if not 0.0 <= self.noise_std <= 1.0:
            raise ValueError(f"noise_std must lie in [0, 1], got {self.noise_std}")


def lanczos(x, a: int):
    """Lanczos window ``sinc(x) * sinc(x / a)`` on ``|x| < a``, zero outside."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) < a, np.sinc(x) * np.sinc(x / a), 0.0)


def cubic(x, a: float = -0.5):
    """Keys cubic convolution kernel; ``a = -0.5`` is Catmull-Rom."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    near = ((a + 2) * x - (a + 3)) * x * x + 1
    far = ((a * x - 5 * a) * x + 8 * a) * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def lanczos_kernel(a: int, scale: int) -> np.ndarray:
    """Anti-alias taps ``L(k / scale)`` for ``|k| < a * scale``, summing to one."""
    if a < 1 or scale < 1:
        raise ValueError("a and scale must be positive")
    k = np.arange(-a * scale + 1, a * scale)
    taps = lanczos(k / scale, a)
    return taps / taps.sum()


def _accumulate(rows: int, cols: int, offsets, weights) -> np.ndarray:
    # Replicate boundary: out-of-range taps fold onto the nearest edge sample.
    mat = np.zeros((rows, cols))
    idx = np.clip(offsets, 0, cols - 1)
    np.add.at(mat, (np.repeat(np.arange(rows), offsets.shape[1]), idx.ravel()), weights.ravel())
    return mat


@lru_cache(maxsize=64)
def downsample_matrix(n: int, scale: int, a: int) -> np.ndarray:
    """(n // scale, n) anti-aliased Lanczos decimation matrix.

    Output sample ``i`` sits at input coordinate ``(i + 0.5) * scale - 0.5``
    (pixel-center alignment), weights are ``L((j - c) / scale)``.
    For odd ``scale`` each row is exactly :func:`lanczos_kernel`.
    """
    if n % scale:
        raise DataError(f"length {n} is not divisible by scale {scale}")
    m = n // scale
    centers = (np.arange(m) + 0.5) * scale - 0.5
    half = a * scale
    offsets = np.floor(centers)[:, None].astype(int) + np.arange(-half, half + 2)[None, :]
    weights = lanczos((offsets - centers[:, None]) / scale, a)
    weights /= weights.sum(axis=1, keepdims=True)
    mat = _accumulate(m, n, offsets, weights)
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=64)
def _upsample_matrix(n: int, scale: int, kind: str, a: int) -> np.ndarray:
    out = n * scale
    coords = (np.arange(out) + 0.5) / scale - 0.5
    support = a if kind == "lanczos" else 2
    offsets = np.floor(coords)[:, None].astype(int) + np.arange(-support + 1, support + 1)[None, :]
    dist = offsets - coords[:, None]
    weights = lanczos(dist, a) if kind == "lanczos" else cubic(dist)
    weights /= weights.sum(axis=1, keepdims=True)
    mat = _accumulate(out, n, offsets, weights)
    mat.setflags(write=False)
    return mat


def lanczos_upsample_matrix(n: int, scale: int, a: int) -> np.ndarray:
    """(n * scale, n) Lanczos interpolation matrix, half-sample aligned."""
    return _upsample_matrix(n, scale, "lanczos", a)


def bicubic_upsample_matrix(n: int, scale: int) -> np.ndarray:
    return _upsample_matrix(n, scale, "cubic", 2)


def _separable(frame: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return rows @ np.asarray(frame, dtype=np.float64) @ cols.T


def downsample(frame, model: DegradationModel, clamp: bool = True) -> np.ndarray:
    """Noiseless part of the degradation: Lanczos anti-alias then decimation.

    ``clamp=False`` exposes the purely linear operator.
    """
    frame = np.asarray(frame, dtype=np.float64)
    h, w = frame.shape
    s = model.scale
    if h % s or w % s:
        raise DataError(f"frame {h}x{w} is not divisible by scale {s}")
    out = _separable(frame, downsample_matrix(h, s, model.lanczos_a), downsample_matrix(w, s, model.lanczos_a))
    return np.clip(out, 0.0, 1.0) if clamp else out


def adjoint_downsample(frame, model: DegradationModel) -> np.ndarray:
    """Exact adjoint of the unclamped :func:`downsample`."""
    frame = np.asarray(frame, dtype=np.float64)
    m, n = frame.shape
    s = model.scale
    rows = downsample_matrix(m * s, s, model.lanczos_a)
    cols = downsample_matrix(n * s, s, model.lanczos_a)
    return rows.T @ frame @ cols


def lanczos_upsample(frame, scale: int, a: int = 2) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    h, w = frame.shape
    return _separable(frame, lanczos_upsample_matrix(h, scale, a), lanczos_upsample_matrix(w, scale, a))


def bicubic_upsample(frame, scale: int) -> np.ndarray:
    """Catmull-Rom baseline, clamped to [0, 1]."""
    frame = np.asarray(frame, dtype=np.float64)
    h, w = frame.shape
    out = _separable(frame, bicubic_upsample_matrix(h, scale), bicubic_upsample_matrix(w, scale))
    return np.clip(out, 0.0, 1.0)


def bicubic_clip(clip: VideoClip, scale: int) -> VideoClip:
    return VideoClip(np.stack([bicubic_upsample(f, scale) for f in clip.frames]))


def add_noise(frame, std: float, seed) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if std == 0:
        return frame.copy()
    rng = np.random.default_rng(seed)
    return np.clip(frame + rng.normal(0.0, std, size=frame.shape), 0.0, 1.0)


def frame_noise_seed(seed: int, t: int) -> np.random.SeedSequence:
    """Decorrelated noise stream for 1-based frame ``t``."""
    return np.random.SeedSequence([int(seed), NOISE_STREAM, int(t)])


def degrade_clip(clip: VideoClip, model: DegradationModel) -> VideoClip:
    out = []
    for t, frame in enumerate(clip.frames, start=1):
        out.append(add_noise(downsample(frame, model), model.noise_std, frame_noise_seed(model.seed, t)))
    return VideoClip(np.stack(out))


PHANTOM_PERIOD = 16
SPECKLE_GRAIN = 1.0 / 24.0  # speckle correlation length relative to the short side


def generate_phantom(height: int, width: int, frame_count: int, seed: int = 0) -> VideoClip:
    """Ultrasound-like ground truth: a beating dark cavity inside speckled tissue.

    Design (version 2): static speckle texture made of Gaussian-smoothed
    exponential noise over a depth-attenuated tissue level, a bright wall band
    around an elliptical cavity whose semi-axes oscillate with a period of 16
    frames, and soft sub-pixel edges. Values are clipped to [0, 1].
    """
    if height < 32 or width < 32:
        raise ValueError("phantom needs height and width of at least 32")
    if frame_count < 1:
        raise ValueError("frame_count must be positive")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), PHANTOM_STREAM]))
    grain = max(1.0, min(height, width) * SPECKLE_GRAIN)
    speckle = gaussian_filter(rng.exponential(1.0, size=(height, width)), sigma=grain, mode="wrap")
    speckle = (speckle - speckle.mean()) / speckle.std()
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    depth = yy / (height - 1)
    tissue = (0.62 - 0.22 * depth) * (1.0 + 0.18 * speckle)

    edge = 0.6  # pixels, soft transition keeps edges band-limited
    cy, cx = 0.52 * height, 0.5 * width
    phase_y, phase_x = rng.uniform(-0.15, 0.15, size=2)
    frames = []
    for t in range(frame_count):
        beat = np.cos(2.0 * np.pi * t / PHANTOM_PERIOD)
        ry = 0.26 * height * (1.0 + 0.18 * beat)
        rx = 0.2 * width * (1.0 + 0.22 * beat)
        oy = cy + phase_y * 0.02 * height * beat
        ox = cx + phase_x * 0.02 * width * beat
        radius = np.sqrt(((yy - oy) / ry) ** 2 + ((xx - ox) / rx) ** 2)
        # Signed distance in pixels, approximated along the mean radius.
        dist = (radius - 1.0) * 0.5 * (ry + rx)
        inside = 1.0 / (1.0 + np.exp(dist / edge))
        wall_thickness = 0.06 * min(height, width)
        wall = 1.0 / (1.0 + np.exp(-dist / edge)) * 1.0 / (1.0 + np.exp((dist - wall_thickness) / edge))
        frame = tissue + 0.25 * wall
        frame = inside * (0.06 + 0.02 * speckle) + (1.0 - inside) * frame
        frames.append(np.clip(frame, 0.0, 1.0))
    return VideoClip(np.stack(frames))
