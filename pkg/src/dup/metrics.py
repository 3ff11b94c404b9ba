"""Full-reference quality metrics for unit-range frames."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from dup.video_io import DataError, VideoClip

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricPair:
    psnr_db: float
    ssim: float


@dataclass(frozen=True)
class ClipScores:
    frames: tuple[MetricPair, ...]
    mean_psnr: float
    mean_ssim: float
    infinite_excluded: bool  # True when some frame had zero error


def _pair(reference, test) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(test, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(reference, test) -> float:
    a, b = _pair(reference, test)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    x = sliding_window_view(x, g.size, axis=0) @ g
    return sliding_window_view(x, g.size, axis=1) @ g


def ssim_map(reference, test, data_range: float = 1.0) -> np.ndarray:
    a, b = _pair(reference, test)
    if min(a.shape) < SSIM_WINDOW:
        raise DataError(f"SSIM needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a**2
    var_b = _filter_valid(b * b, g) - mu_b**2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(reference, test) -> float:
    """Gaussian-window SSIM averaged over fully interior windows."""
    return float(np.mean(ssim_map(reference, test)))


def score_clip(reference: VideoClip, test: VideoClip) -> ClipScores:
    if reference.frame_count != test.frame_count:
        raise DataError(f"frame count mismatch: {reference.frame_count} vs {test.frame_count}")
    if reference.shape != test.shape:
        raise DataError(f"frame shape mismatch: {reference.shape} vs {test.shape}")
    pairs = tuple(MetricPair(psnr(r, t), ssim(r, t)) for r, t in zip(reference.frames, test.frames))
    finite = [p.psnr_db for p in pairs if math.isfinite(p.psnr_db)]
    mean_psnr = sum(finite) / len(finite) if finite else math.inf
    return ClipScores(
        frames=pairs,
        mean_psnr=mean_psnr,
        mean_ssim=sum(p.ssim for p in pairs) / len(pairs),
        infinite_excluded=len(finite) < len(pairs),
    )
