
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dup.degradation import (
    DegradationModel,
    adjoint_downsample,
    add_noise,
    bicubic_upsample,
    degrade_clip,
    downsample,
    downsample_matrix,
    generate_phantom,
    lanczos,
    lanczos_kernel,
    lanczos_upsample,
)
from dup.video_io import DataError, VideoClip
from oracles import (
    SCALE_A,
    cubic_scalar,
    dense_operator,
    direct_downsample,
    direct_interp_1d,
    lanczos_scalar,
)


def test_lanczos_kernel_centre_and_zeros():
    assert lanczos(0.0, 3) == 1.0
    np.testing.assert_allclose(lanczos(np.array([-2.0, -1.0, 1.0, 2.0]), 3), 0.0, atol=1e-16)


@pytest.mark.parametrize("a", [1, 2, 3])
@pytest.mark.parametrize("scale", [1, 2, 3, 4])
def test_lanczos_kernel_normalised_and_symmetric(a, scale):
    taps = lanczos_kernel(a, scale)
    assert len(taps) == 2 * a * scale - 1
    assert abs(taps.sum() - 1.0) <= 1e-12
    np.testing.assert_array_equal(taps, taps[::-1])


def test_odd_scale_rows_are_the_kernel():
    taps = lanczos_kernel(3, 3)
    row = downsample_matrix(60, 3, 3)[10]
    start = 10 * 3 + 1 - (len(taps) // 2)
    np.testing.assert_allclose(row[start : start + len(taps)], taps, atol=1e-15)


@pytest.mark.parametrize("scale", [1, 2, 3, 4])
def test_downsample_preserves_constants(scale):
    frame = np.full((12 * scale, 8 * scale), 0.37)
    out = downsample(frame, DegradationModel(scale=scale))
    assert out.shape == (12, 8)
    np.testing.assert_allclose(out, 0.37, rtol=0, atol=1e-15)


def test_downsample_scale_one_is_identity():
    x = np.random.default_rng(0).random((9, 7))
    np.testing.assert_allclose(downsample(x, DegradationModel(scale=1)), x, atol=1e-12)


def test_downsample_impulse_matches_dense_operator():
    model = DegradationModel(scale=2)
    impulse = np.zeros((8, 8))
    impulse[4, 4] = 1.0
    dense = dense_operator((8, 8), model)
    expected = (dense @ impulse.ravel()).reshape(4, 4)
    np.testing.assert_allclose(downsample(impulse, model, clamp=False), expected, atol=1e-10)
    np.testing.assert_allclose(downsample(impulse, model, clamp=False), direct_downsample(impulse, 2, 3), atol=1e-10)


@pytest.mark.parametrize("scale, a", SCALE_A)
def test_downsample_matches_direct_loop(scale, a):
    x = np.random.default_rng(scale * 10 + a).random((4 * scale, 3 * scale))
    model = DegradationModel(scale=scale, lanczos_a=a)
    np.testing.assert_allclose(downsample(x, model, clamp=False), direct_downsample(x, scale, a), atol=1e-12)


def test_downsample_rejects_indivisible():
    with pytest.raises(DataError):
        downsample(np.zeros((9, 8)), DegradationModel(scale=2))


@pytest.mark.parametrize("scale, a", SCALE_A)
def test_adjoint_identity(scale, a):
    rng = np.random.default_rng(100 + scale + a)
    model = DegradationModel(scale=scale, lanczos_a=a)
    for _ in range(20):
        x = rng.standard_normal((6 * scale, 5 * scale))
        y = rng.standard_normal((6, 5))
        lhs = np.vdot(downsample(x, model, clamp=False), y)
        rhs = np.vdot(x, adjoint_downsample(y, model))
        assert abs(lhs - rhs) <= 1e-6 * max(abs(lhs), abs(rhs))


@pytest.mark.parametrize("scale, a", SCALE_A)
def test_adjoint_matches_dense_transpose(scale, a):
    model = DegradationModel(scale=scale, lanczos_a=a)
    dense = dense_operator((3 * scale, 4 * scale), model)
    y = np.random.default_rng(7).standard_normal((3, 4))
    expected = (dense.T @ y.ravel()).reshape(3 * scale, 4 * scale)
    np.testing.assert_allclose(adjoint_downsample(y, model), expected, atol=1e-10)


def test_adjoint_scale_one_is_identity():
    y = np.random.default_rng(1).random((5, 6))
    np.testing.assert_allclose(adjoint_downsample(y, DegradationModel(scale=1)), y, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    alpha=st.floats(-3, 3),
    beta=st.floats(-3, 3),
    scale_a=st.sampled_from(SCALE_A),
)
def test_downsample_linearity(seed, alpha, beta, scale_a):
    scale, a = scale_a
    model = DegradationModel(scale=scale, lanczos_a=a)
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 4 * scale, 4 * scale))
    lhs = downsample(alpha * x + beta * y, model, clamp=False)
    rhs = alpha * downsample(x, model, clamp=False) + beta * downsample(y, model, clamp=False)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(1.0, np.linalg.norm(rhs))


def test_lanczos_upsample_constant_and_identity():
    np.testing.assert_allclose(lanczos_upsample(np.full((5, 4), 0.6), 3, 2), 0.6, atol=1e-15)
    x = np.random.default_rng(2).random((5, 4))
    np.testing.assert_allclose(lanczos_upsample(x, 1, 3), x, atol=1e-12)


@pytest.mark.parametrize("a", [2, 3])
def test_lanczos_upsample_ramp_matches_scalar_formula(a):
    ramp = np.array([0.0, 1 / 3, 2 / 3, 1.0])
    expected = direct_interp_1d(ramp, 2, lambda x: lanczos_scalar(x, a), a)
    out = lanczos_upsample(ramp[None, :], 2, a)
    assert out.shape == (2, 8)
    np.testing.assert_allclose(out[0], expected, atol=1e-14)
    np.testing.assert_allclose(out[1], expected, atol=1e-14)


def test_bicubic_constant_and_identity():
    np.testing.assert_allclose(bicubic_upsample(np.full((4, 6), 0.25), 4), 0.25, atol=1e-15)
    x = np.random.default_rng(4).random((4, 6))
    np.testing.assert_allclose(bicubic_upsample(x, 1), x, atol=1e-12)


def test_bicubic_ramp_matches_scalar_formula():
    ramp = np.array([0.0, 1 / 3, 2 / 3, 1.0])
    expected = direct_interp_1d(ramp, 2, cubic_scalar, 2)
    # The baseline clamps to the unit interval; the overshoot at the ends is cut.
    np.testing.assert_allclose(bicubic_upsample(ramp[None, :], 2)[0], np.clip(expected, 0, 1), atol=1e-14)
    assert expected[0] < 0 and expected[-1] > 1
    # Catmull-Rom reproduces linear data away from the clamped border.
    np.testing.assert_allclose(expected[3:5], [1.25 / 3, 1.75 / 3], atol=1e-14)


def test_add_noise_zero_std_is_identity():
    x = np.random.default_rng(5).random((6, 6))
    np.testing.assert_array_equal(add_noise(x, 0.0, 1), x)


def test_add_noise_deterministic():
    x = np.full((16, 16), 0.5)
    np.testing.assert_array_equal(add_noise(x, 0.05, 11), add_noise(x, 0.05, 11))


def test_add_noise_statistics():
    x = np.full((512, 512), 0.5)
    d = add_noise(x, 0.05, 123) - x
    assert 0.048 <= d.std() <= 0.052
    assert -0.001 <= d.mean() <= 0.001


def test_degrade_clip_shapes_and_constants():
    clip = VideoClip(np.full((3, 16, 24), 0.4))
    out = degrade_clip(clip, DegradationModel(scale=4, noise_std=0.0))
    assert out.frames.shape == (3, 4, 6)
    np.testing.assert_allclose(out.frames, 0.4, atol=1e-15)


def test_degrade_clip_noise_differs_between_frames():
    clip = VideoClip(np.full((2, 16, 16), 0.5))
    out = degrade_clip(clip, DegradationModel(scale=2, noise_std=0.05, seed=9))
    assert not np.array_equal(out[0], out[1])


def test_phantom_contract():
    clip = generate_phantom(64, 48, 10, seed=3)
    assert clip.frames.shape == (10, 64, 48)
    assert clip.frames.min() >= 0.0 and clip.frames.max() <= 1.0
    np.testing.assert_array_equal(clip.frames, generate_phantom(64, 48, 10, seed=3).frames)
    assert not np.array_equal(clip.frames, generate_phantom(64, 48, 10, seed=4).frames)


def test_phantom_opposite_phases_differ():
    clip = generate_phantom(96, 96, 9, seed=7)
    diff = np.abs(clip[0] - clip[8]).mean()
    assert diff > 0.01
    assert diff == pytest.approx(PHANTOM_PHASE_DIFF, rel=1e-9)


def test_phantom_rejects_small():
    with pytest.raises(ValueError):
        generate_phantom(16, 64, 2)


# Frozen from the reference generator, design version 2 (96x96, seed 7, frames 1 and 9).
PHANTOM_PHASE_DIFF = 0.09423426642614052
