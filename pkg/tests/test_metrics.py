import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dup.metrics import psnr, score_clip, ssim
from dup.video_io import DataError, VideoClip
from oracles import direct_ssim


def test_psnr_identical_is_infinite():
    x = np.random.default_rng(0).random((8, 8))
    assert psnr(x, x) == math.inf


def test_psnr_constant_offset():
    x = np.full((16, 16), 0.3)
    assert abs(psnr(x, x + 0.1) - 20.0) <= 1e-9


def test_psnr_symmetric():
    rng = np.random.default_rng(1)
    a, b = rng.random((2, 12, 12))
    assert psnr(a, b) == psnr(b, a)


def test_shape_mismatch():
    with pytest.raises(DataError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(DataError):
        ssim(np.zeros((12, 12)), np.zeros((12, 13)))


def test_ssim_too_small():
    with pytest.raises(DataError):
        ssim(np.zeros((10, 20)), np.zeros((10, 20)))


def test_ssim_identical_is_exactly_one():
    x = np.random.default_rng(2).random((32, 40))
    assert ssim(x, x) == 1.0


def test_ssim_against_flat_frame_below_one():
    x = np.random.default_rng(3).random((24, 24))
    assert ssim(x, np.full_like(x, 0.5)) < 1.0


def test_ssim_matches_direct_formula():
    rng = np.random.default_rng(4)
    for _ in range(10):
        a = rng.random((64, 64))
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        assert abs(ssim(a, b) - direct_ssim(a, b)) <= 1e-4


def test_ssim_matches_scikit_image():
    skimage_metrics = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(5)
    a = rng.random((48, 48))
    b = np.clip(a + rng.normal(0, 0.2, a.shape), 0, 1)
    ref = skimage_metrics.structural_similarity(
        a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0
    )
    assert ssim(a, b) == pytest.approx(ref, abs=1e-10)


def test_psnr_decreases_with_noise():
    rng = np.random.default_rng(6)
    x = np.full((256, 256), 0.5)
    base = rng.standard_normal(x.shape)
    values = [psnr(x, x + s * base) for s in (0.01, 0.02, 0.05, 0.1, 0.2)]
    assert all(a > b for a, b in zip(values, values[1:]))


def _window_means(x, size=11, sigma=1.5):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2 * sigma**2))
    g /= g.sum()
    n = x.shape[0] - size + 1, x.shape[1] - size + 1
    return np.array([[(g * x[i : i + size, j : j + size]).sum() for j in range(n[1])] for i in range(n[0])])


def _luminance(ma, mb, c1=1e-4):
    return (2 * ma * mb + c1) / (ma**2 + mb**2 + c1)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(0, 0.1))
def test_ssim_range_and_shift_behaviour(seed, c):
    rng = np.random.default_rng(seed)
    a = rng.random((20, 20)) * 0.9
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 0.9)
    value = ssim(a, b)
    assert -1.0 <= value <= 1.0
    # Contrast-structure part is exactly shift invariant; only the luminance
    # term moves, by at most its own change since |cs| <= 1.
    ma, mb = _window_means(a), _window_means(b)
    bound = np.mean(np.abs(_luminance(ma + c, mb + c) - _luminance(ma, mb)))
    assert abs(ssim(a + c, b + c) - value) <= bound + 1e-9


def test_score_clip_identical():
    clip = VideoClip(np.random.default_rng(7).random((3, 16, 16)))
    scores = score_clip(clip, clip)
    assert all(p.ssim == 1.0 for p in scores.frames)
    assert scores.infinite_excluded


def test_score_clip_means_and_exclusion():
    ref = VideoClip(np.full((2, 16, 16), 0.4))
    test = VideoClip(np.stack([np.full((16, 16), 0.5), np.full((16, 16), 0.4)]))
    scores = score_clip(ref, test)
    assert scores.frames[0].psnr_db == pytest.approx(20.0, abs=1e-9)
    assert scores.frames[1].psnr_db == math.inf
    assert scores.mean_psnr == pytest.approx(20.0, abs=1e-9)
    assert scores.infinite_excluded

    ref2 = VideoClip(np.full((2, 16, 16), 0.4))
    test2 = VideoClip(np.stack([np.full((16, 16), 0.5), np.full((16, 16), 0.4 + 10 ** -1.5)]))
    scores2 = score_clip(ref2, test2)
    assert scores2.mean_psnr == pytest.approx(25.0, abs=1e-9)
    assert not scores2.infinite_excluded


def test_score_clip_mismatch():
    with pytest.raises(DataError):
        score_clip(VideoClip(np.zeros((2, 16, 16))), VideoClip(np.zeros((3, 16, 16))))
