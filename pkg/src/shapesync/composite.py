"""Soft mouth compositing: raw mask -> dilation -> Gaussian blur -> blend.

The raw mouth rectangle comes from pose ground truth.  Dilation uses a
Chebyshev disc (square window of half-width r), which keeps the brute-force
oracle exact in integer arithmetic.  The blur is two 1-D Gaussian passes
with the kernel truncated at ceil(3*sigma) and renormalized to sum 1; edge
padding replicates border values so a constant mask stays constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError, InvalidInputError
from .frames import FrameSequence


@dataclass(frozen=True)
class CompositeSpec:
    dilate_radius: int = 6
    blur_sigma: float = 4.0

    def __post_init__(self):
        if self.dilate_radius < 0:
            raise InvalidInputError(f"dilation radius must be >= 0, got {self.dilate_radius}")
        if self.blur_sigma <= 0:
            raise InvalidInputError(f"blur sigma must be > 0, got {self.blur_sigma}")


def mask_from_pose(track, dims) -> tuple:
    """Rasterize per-frame mouth rectangles from mouth-corner keypoints.

    The axis-aligned box spanning the two corners is expanded by 20% of its
    extent per side (at least one pixel row/column survives for degenerate
    mouths).  Returns (mask, clipped) where mask has shape (F, H, W) with
    values in {0, 1} and clipped flags any keypoint outside the frame.
    """
    h, w = dims
    corners = np.asarray(track.mouth_corners, dtype=np.float64)  # (F, 2, 2) as (x, y)
    f = corners.shape[0]
    mask = np.zeros((f, h, w), dtype=np.float32)
    clipped = False
    for i in range(f):
        xs, ys = corners[i, :, 0], corners[i, :, 1]
        if xs.min() < 0 or ys.min() < 0 or xs.max() > w - 1 or ys.max() > h - 1:
            clipped = True
        ext_x, ext_y = xs.max() - xs.min(), ys.max() - ys.min()
        x0 = xs.min() - 0.2 * ext_x
        x1 = xs.max() + 0.2 * ext_x
        y0 = ys.min() - 0.2 * ext_y
        y1 = ys.max() + 0.2 * ext_y
        c0 = min(max(int(math.floor(x0)), 0), w - 1)
        c1 = min(max(int(math.ceil(x1)), 0), w - 1)
        r0 = min(max(int(math.floor(y0)), 0), h - 1)
        r1 = min(max(int(math.ceil(y1)), 0), h - 1)
        mask[i, r0:r1 + 1, c0:c1 + 1] = 1.0
    return mask, clipped


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Morphological dilation with a square structuring element of half-width radius.

    Works per frame on (F, H, W) or on a single (H, W) mask.
    """
    m = np.asarray(mask, dtype=np.float32)
    if not np.isin(m, (0.0, 1.0)).all():
        raise InvalidInputError("dilation input must be binary")
    if radius == 0:
        return m.copy()
    single = m.ndim == 2
    if single:
        m = m[None]
    r = int(radius)
    padded = np.pad(m, ((0, 0), (r, r), (r, r)))
    out = np.zeros_like(m)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            np.maximum(out, padded[:, r + dy:r + dy + m.shape[1],
                                   r + dx:r + dx + m.shape[2]], out=out)
    return out[0] if single else out


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian truncated at ceil(3*sigma), renormalized to sum 1."""
    r = int(math.ceil(3.0 * sigma))
    xs = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return (k / k.sum()).astype(np.float64)


def _blur_axis(x: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = len(kernel) // 2
    pad = [(0, 0)] * x.ndim
    pad[axis] = (r, r)
    padded = np.pad(x, pad, mode="edge")
    out = np.zeros_like(x, dtype=np.float64)
    for j, kw in enumerate(kernel):
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(j, j + x.shape[axis])
        out += kw * padded[tuple(sl)]
    return out


def gaussian_blur(mask: np.ndarray, sigma: float) -> np.ndarray:
    """Separable per-frame blur; output clamped to [0, 1]."""
    if sigma <= 0:
        raise InvalidInputError(f"sigma must be > 0, got {sigma}")
    m = np.asarray(mask, dtype=np.float64)
    k = gaussian_kernel(sigma)
    out = _blur_axis(_blur_axis(m, k, axis=-1), k, axis=-2)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def soft_mask(raw: np.ndarray, spec: CompositeSpec) -> np.ndarray:
    """Raw binary mask -> dilated -> blurred weighting mask."""
    return gaussian_blur(dilate(raw, spec.dilate_radius), spec.blur_sigma)


def blend(x_gen: FrameSequence, x_video: FrameSequence, weights: np.ndarray) -> FrameSequence:
    """Per-pixel convex combination w * x_gen + (1 - w) * x_video."""
    if x_gen.shape != x_video.shape:
        raise InvalidDimensionError(f"frame shape mismatch {x_gen.shape} vs {x_video.shape}")
    w = np.asarray(weights, dtype=np.float32)
    if w.shape != x_gen.shape[:3]:
        raise InvalidDimensionError(
            f"weight mask shape {w.shape} != frame shape {x_gen.shape[:3]}"
        )
    w = w[..., None]
    return FrameSequence(w * x_gen.frames + (1.0 - w) * x_video.frames)


def boundary_gradient(weights: np.ndarray) -> float:
    """Max forward-difference magnitude of a weight mask over both spatial axes."""
    w = np.asarray(weights, dtype=np.float64)
    gy = np.abs(np.diff(w, axis=-2))
    gx = np.abs(np.diff(w, axis=-1))
    return float(max(gy.max(initial=0.0), gx.max(initial=0.0)))
