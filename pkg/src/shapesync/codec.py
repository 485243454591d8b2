"""Deterministic pixel <-> latent codec and channel plumbing.

Encoding is non-overlapping mean pooling over (temporal, spatial, spatial)
blocks; decoding is nearest-neighbor upsampling with a [0, 1] clamp.  The
codec is linear and exactly invertible on block-constant video, which lets
background-preservation claims be measured without a learned autoencoder.

Pixel masks downsample with an any-coverage rule: a latent cell is marked
editable iff any pixel in its pooling block is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError, InvalidInputError
from .frames import FrameSequence
from .grid import Grid


@dataclass(frozen=True)
class CodecSpec:
    spatial_factor: int = 4
    temporal_factor: int = 1

    def __post_init__(self):
        if self.spatial_factor < 1 or self.temporal_factor < 1:
            raise InvalidInputError("codec factors must be positive")


def _check_divisible(f, h, w, spec: CodecSpec):
    if f % spec.temporal_factor or h % spec.spatial_factor or w % spec.spatial_factor:
        raise InvalidDimensionError(
            f"dims (F={f}, H={h}, W={w}) not divisible by codec factors "
            f"({spec.temporal_factor}, {spec.spatial_factor}, {spec.spatial_factor})"
        )


def encode_grid(g: Grid, spec: CodecSpec) -> Grid:
    """Mean-pool a pixel-space grid (B, C, F, H, W) into latent space.

    Linear, no clamping; float64 accumulation inside the reduction.
    """
    b, c, f, h, w = g.dims
    _check_divisible(f, h, w, spec)
    pf, ps = spec.temporal_factor, spec.spatial_factor
    x = g.data.reshape(b, c, f // pf, pf, h // ps, ps, w // ps, ps)
    pooled = x.mean(axis=(3, 5, 7), dtype=np.float64)
    return Grid(pooled.astype(np.float32))


def encode_frames(v: FrameSequence, spec: CodecSpec) -> Grid:
    """Pixel frames (F, H, W, C) -> latent grid (1, C, F/pf, H/ps, W/ps)."""
    g = Grid(np.transpose(v.frames, (3, 0, 1, 2))[None])
    return encode_grid(g, spec)


def decode_latent(z: Grid, spec: CodecSpec) -> FrameSequence:
    """Nearest-neighbor upsample of a (1, C, f, h, w) latent, clamped to [0, 1]."""
    b, c, f, h, w = z.dims
    if b != 1:
        raise InvalidDimensionError(f"decode expects batch 1, got {b}")
    x = z.data[0]
    x = np.repeat(x, spec.temporal_factor, axis=1)
    x = np.repeat(x, spec.spatial_factor, axis=2)
    x = np.repeat(x, spec.spatial_factor, axis=3)
    return FrameSequence(np.transpose(x, (1, 2, 3, 0)))


def concat_channels(a: Grid, b: Grid) -> Grid:
    """Channel concatenation; a occupies the leading channels."""
    if a.dims[0] != b.dims[0] or a.dims[2:] != b.dims[2:]:
        raise InvalidDimensionError(
            f"extent mismatch outside channel axis: {a.dims} vs {b.dims}"
        )
    return Grid(np.concatenate([a.data, b.data], axis=1))


def channel_slice(g: Grid, start: int, stop: int) -> Grid:
    """Inverse of concat_channels: copy channels [start, stop)."""
    if not 0 <= start <= stop <= g.dims[1]:
        raise InvalidDimensionError(f"channel slice [{start}, {stop}) outside 0..{g.dims[1]}")
    return Grid(g.data[:, start:stop].copy())


def latent_mask_from_pixel_mask(m_px: FrameSequence, spec: CodecSpec) -> Grid:
    """Downsample a binary pixel mask; any covered pixel marks the latent cell."""
    m = m_px.frames
    if not np.isin(m, (0.0, 1.0)).all():
        raise InvalidInputError("pixel mask must be binary")
    f, h, w, c = m.shape
    if c != 1:
        m = m[..., :1]
    _check_divisible(f, h, w, spec)
    pf, ps = spec.temporal_factor, spec.spatial_factor
    x = m[..., 0].reshape(f // pf, pf, h // ps, ps, w // ps, ps)
    any_cov = x.max(axis=(1, 3, 5))
    return Grid(any_cov[None, None].astype(np.float32))
