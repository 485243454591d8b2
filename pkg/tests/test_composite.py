import numpy as np
import pytest

from shapesync.composite import (
    CompositeSpec,
    blend,
    boundary_gradient,
    dilate,
    gaussian_blur,
    gaussian_kernel,
    mask_from_pose,
    soft_mask,
)
from shapesync.errors import InvalidDimensionError, InvalidInputError
from shapesync.frames import FrameSequence
from shapesync.synth import PoseTrack


def dilate_oracle(mask, r):
    """Chebyshev-ball dilation by literal neighborhood max."""
    h, w = mask.shape
    out = np.zeros_like(mask)
    for y in range(h):
        for x in range(w):
            y0, y1 = max(0, y - r), min(h, y + r + 1)
            x0, x1 = max(0, x - r), min(w, x + r + 1)
            out[y, x] = mask[y0:y1, x0:x1].max()
    return out


def blur_oracle(img, sigma):
    """Dense 2-D convolution with the separable kernel's outer product."""
    k1 = gaussian_kernel(sigma)
    k2 = np.outer(k1, k1)
    r = len(k1) // 2
    padded = np.pad(img.astype(np.float64), r, mode="edge")
    h, w = img.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            out[y, x] = (padded[y:y + 2 * r + 1, x:x + 2 * r + 1] * k2).sum()
    return np.clip(out, 0.0, 1.0)


def test_dilate_matches_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        m = (rng.random((12, 14)) < 0.2).astype(np.float32)
        for r in (1, 2, 4):
            np.testing.assert_array_equal(dilate(m, r), dilate_oracle(m, r))


def test_dilate_single_pixel_makes_square():
    m = np.zeros((9, 9), dtype=np.float32)
    m[4, 4] = 1.0
    out = dilate(m, 2)
    want = np.zeros((9, 9), dtype=np.float32)
    want[2:7, 2:7] = 1.0
    np.testing.assert_array_equal(out, want)


def test_dilate_radius_zero_is_identity():
    m = (np.random.default_rng(1).random((6, 6)) < 0.5).astype(np.float32)
    np.testing.assert_array_equal(dilate(m, 0), m)


def test_dilate_frame_batch():
    m = np.zeros((2, 5, 5), dtype=np.float32)
    m[1, 2, 2] = 1.0
    out = dilate(m, 1)
    assert out[0].sum() == 0.0
    assert out[1].sum() == 9.0


def test_dilate_requires_binary():
    with pytest.raises(InvalidInputError):
        dilate(np.full((4, 4), 0.5, dtype=np.float32), 1)


def test_kernel_normalized_symmetric():
    for sigma in (0.5, 1.0, 4.0):
        k = gaussian_kernel(sigma)
        assert len(k) == 2 * int(np.ceil(3 * sigma)) + 1
        assert k.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(k, k[::-1])


def test_blur_matches_dense_oracle():
    rng = np.random.default_rng(2)
    for _ in range(10):
        img = (rng.random((10, 12)) < 0.3).astype(np.float32)
        for sigma in (0.8, 1.5):
            got = gaussian_blur(img, sigma)
            np.testing.assert_allclose(got, blur_oracle(img, sigma), atol=1e-6)


def test_blur_preserves_constant():
    const = np.full((3, 8, 8), 1.0, dtype=np.float32)
    np.testing.assert_allclose(gaussian_blur(const, 4.0), const, atol=1e-6)
    zero = np.zeros((3, 8, 8), dtype=np.float32)
    np.testing.assert_allclose(gaussian_blur(zero, 4.0), zero, atol=1e-12)


def test_blur_output_in_unit_interval():
    m = (np.random.default_rng(3).random((8, 8)) < 0.5).astype(np.float32)
    out = gaussian_blur(m, 2.0)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_soft_mask_pipeline_order():
    spec = CompositeSpec(dilate_radius=2, blur_sigma=1.0)
    m = np.zeros((7, 7), dtype=np.float32)
    m[3, 3] = 1.0
    np.testing.assert_allclose(soft_mask(m, spec),
                               gaussian_blur(dilate(m, 2), 1.0), atol=1e-12)


def test_blend_identities():
    rng = np.random.default_rng(4)
    gen = FrameSequence(rng.random((2, 6, 6, 3)).astype(np.float32))
    vid = FrameSequence(rng.random((2, 6, 6, 3)).astype(np.float32))
    ones = np.ones((2, 6, 6), dtype=np.float32)
    zeros = np.zeros((2, 6, 6), dtype=np.float32)
    np.testing.assert_allclose(blend(gen, vid, ones).frames, gen.frames, atol=1e-7)
    np.testing.assert_allclose(blend(gen, vid, zeros).frames, vid.frames, atol=1e-7)
    w = rng.random((2, 6, 6)).astype(np.float32)
    np.testing.assert_allclose(blend(vid, vid, w).frames, vid.frames, atol=1e-7)


def test_blend_partition_of_unity_and_range():
    rng = np.random.default_rng(5)
    for _ in range(50):
        gen = FrameSequence(rng.random((1, 5, 5, 1)).astype(np.float32))
        vid = FrameSequence(rng.random((1, 5, 5, 1)).astype(np.float32))
        w = rng.random((1, 5, 5)).astype(np.float32)
        out = blend(gen, vid, w).frames
        lo = np.minimum(gen.frames, vid.frames)
        hi = np.maximum(gen.frames, vid.frames)
        assert (out >= lo - 1e-6).all() and (out <= hi + 1e-6).all()


def test_blend_shape_checks():
    gen = FrameSequence(np.zeros((1, 4, 4, 1)))
    vid = FrameSequence(np.zeros((1, 4, 5, 1)))
    with pytest.raises(InvalidDimensionError):
        blend(gen, vid, np.zeros((1, 4, 4)))
    with pytest.raises(InvalidDimensionError):
        blend(gen, gen, np.zeros((1, 5, 4)))


def test_boundary_gradient_step_vs_blur():
    m = np.zeros((16, 16), dtype=np.float32)
    m[:, 8:] = 1.0
    assert boundary_gradient(m) == 1.0
    sigma = 4.0
    soft = gaussian_blur(m, sigma)
    bound = 1.0 / (sigma * np.sqrt(2.0 * np.pi))
    assert boundary_gradient(soft) <= bound * 1.05


def test_mask_from_pose_rectangle():
    corners = np.array([[[10.0, 20.0], [20.0, 20.0]]])
    track = PoseTrack(centers=np.array([[15.0, 18.0]]), theta=np.zeros(1),
                      mouth_corners=corners)
    mask, clipped = mask_from_pose(track, (32, 32))
    assert not clipped
    ys, xs = np.nonzero(mask[0])
    # 20% of the 10 px x-extent on each side; zero y-extent keeps one row
    assert xs.min() == 8 and xs.max() == 22
    assert ys.min() == 20 and ys.max() == 20


def test_mask_from_pose_flags_clipping():
    corners = np.array([[[-3.0, 2.0], [5.0, 2.0]]])
    track = PoseTrack(centers=np.array([[1.0, 2.0]]), theta=np.zeros(1),
                      mouth_corners=corners)
    mask, clipped = mask_from_pose(track, (8, 8))
    assert clipped
    assert mask[0].max() == 1.0


def test_composite_spec_validation():
    with pytest.raises(InvalidInputError):
        CompositeSpec(dilate_radius=-1)
    with pytest.raises(InvalidInputError):
        CompositeSpec(blur_sigma=0.0)
