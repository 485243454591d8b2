"""Pose-anchored token fusion: pose latent -> tokens, patch embedding, additive fuse.

The pose path is Conv3D (kernel = stride = patch size) -> flatten to S x D
tokens -> linear projection -> learnable positional embedding -> layernorm.
Video latents take the patch-embedding path to the same token grid, and the
two streams fuse by element-wise addition, so both must agree on S.

Token sequences are plain float arrays of shape (S, D), ordered
frame-major: token s sits at (fi, hi, wi) with s = fi*h'*w' + hi*w' + wi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError, InvalidInputError
from .grid import Grid
from .rng import RngStream

LN_EPS = 1e-5


@dataclass
class PafsParams:
    """Parameters of the pose token encoder."""

    conv_w: np.ndarray  # (D, C, kf, ks, ks)
    conv_b: np.ndarray  # (D,)
    proj_w: np.ndarray  # (D, D)
    proj_b: np.ndarray  # (D,)
    pos: np.ndarray     # (S, D) learnable positional embedding
    ln_g: np.ndarray    # (D,)
    ln_b: np.ndarray    # (D,)

    @property
    def patch(self) -> tuple:
        return self.conv_w.shape[2:]


@dataclass
class PatchEmbedParams:
    """Per-patch linear projection of the channel-concatenated latent."""

    w: np.ndarray  # (2C * kf * ks * ks, D)
    b: np.ndarray  # (D,)
    channels: int  # expected input channel count (2C)
    patch: tuple   # (kf, ks, ks)


def init_pafs_params(channels, dim, patch, tokens, rng: RngStream) -> PafsParams:
    kf, ks, _ = patch
    fan = channels * kf * ks * ks
    return PafsParams(
        conv_w=(rng.normal((dim, channels, kf, ks, ks)) / np.sqrt(fan)).astype(np.float32),
        conv_b=np.zeros(dim, dtype=np.float32),
        proj_w=(rng.normal((dim, dim)) / np.sqrt(dim)).astype(np.float32),
        proj_b=np.zeros(dim, dtype=np.float32),
        pos=(0.02 * rng.normal((tokens, dim))).astype(np.float32),
        ln_g=np.ones(dim, dtype=np.float32),
        ln_b=np.zeros(dim, dtype=np.float32),
    )


def init_patch_embed_params(channels, dim, patch, rng: RngStream) -> PatchEmbedParams:
    kf, ks, _ = patch
    fan = channels * kf * ks * ks
    return PatchEmbedParams(
        w=(rng.normal((fan, dim)) / np.sqrt(fan)).astype(np.float32),
        b=np.zeros(dim, dtype=np.float32),
        channels=channels,
        patch=tuple(patch),
    )


def patchify(x: np.ndarray, patch) -> np.ndarray:
    """(C, f, h, w) -> (S, C*kf*ks*ks) patch matrix, frame-major token order."""
    c, f, h, w = x.shape
    kf, ks, _ = patch
    if f % kf or h % ks or w % ks:
        raise InvalidDimensionError(
            f"latent dims ({f}, {h}, {w}) not divisible by patch {tuple(patch)}"
        )
    fp, hp, wp = f // kf, h // ks, w // ks
    x = x.reshape(c, fp, kf, hp, ks, wp, ks)
    x = np.transpose(x, (1, 3, 5, 0, 2, 4, 6))  # (fp, hp, wp, c, kf, ks, ks)
    return np.ascontiguousarray(x.reshape(fp * hp * wp, c * kf * ks * ks))


def unpatchify(tokens: np.ndarray, channels, latent_dims, patch) -> np.ndarray:
    """Inverse of patchify: (S, C*kf*ks*ks) -> (C, f, h, w)."""
    f, h, w = latent_dims
    kf, ks, _ = patch
    fp, hp, wp = f // kf, h // ks, w // ks
    x = tokens.reshape(fp, hp, wp, channels, kf, ks, ks)
    x = np.transpose(x, (3, 0, 4, 1, 5, 2, 6))
    return np.ascontiguousarray(x.reshape(channels, f, h, w))


def token_grid_shape(latent_dims, patch) -> tuple:
    f, h, w = latent_dims
    kf, ks, _ = patch
    if f % kf or h % ks or w % ks:
        raise InvalidDimensionError(
            f"latent dims ({f}, {h}, {w}) not divisible by patch {tuple(patch)}"
        )
    return f // kf, h // ks, w // ks


def pose_conv3d(z_pose: Grid, p: PafsParams) -> Grid:
    """Stride-equals-kernel 3D convolution; per-patch linear map to D channels."""
    if z_pose.dims[0] != 1:
        raise InvalidDimensionError("pose conv expects batch 1")
    c = z_pose.dims[1]
    if c != p.conv_w.shape[1]:
        raise InvalidDimensionError(
            f"pose latent has {c} channels, conv kernel expects {p.conv_w.shape[1]}"
        )
    patch = p.patch
    fp, hp, wp = token_grid_shape(z_pose.dims[2:], patch)
    patches = patchify(z_pose.data[0], patch)                # (S, C*kf*ks*ks)
    wmat = p.conv_w.reshape(p.conv_w.shape[0], -1)           # (D, fan)
    out = patches @ wmat.T + p.conv_b                        # (S, D)
    d = p.conv_w.shape[0]
    vol = out.T.reshape(d, fp, hp, wp)
    return Grid(vol[None].astype(np.float32, copy=False))


def layernorm(x: np.ndarray, gain, bias, eps=LN_EPS):
    """Per-row layernorm.  Returns (out, xhat, inv_std) for backward reuse."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * gain + bias, xhat, inv


def layernorm_backward(d_out, xhat, inv, gain):
    """Gradients of layernorm w.r.t. input, gain, bias."""
    d_g = (d_out * xhat).sum(axis=tuple(range(d_out.ndim - 1)))
    d_b = d_out.sum(axis=tuple(range(d_out.ndim - 1)))
    d_xhat = d_out * gain
    m1 = d_xhat.mean(axis=-1, keepdims=True)
    m2 = (d_xhat * xhat).mean(axis=-1, keepdims=True)
    d_x = inv * (d_xhat - m1 - xhat * m2)
    return d_x, d_g, d_b


def pose_tokenize(z1: Grid, p: PafsParams):
    """Flatten conv output to tokens, project, add PE, layernorm.

    Returns (tokens, trace); the trace carries what the backward pass needs.
    """
    d, fp, hp, wp = z1.dims[1:]
    s = fp * hp * wp
    if p.pos.shape[0] != s:
        raise InvalidDimensionError(
            f"positional embedding has {p.pos.shape[0]} rows, token grid has {s}"
        )
    flat = z1.data[0].reshape(d, s).T                        # (S, D)
    proj = flat @ p.proj_w.T + p.proj_b
    pre = proj + p.pos
    out, xhat, inv = layernorm(pre, p.ln_g, p.ln_b)
    trace = {"flat": flat, "xhat": xhat, "inv": inv}
    return out.astype(np.float32, copy=False), trace


def pafs_forward(z_pose: Grid, p: PafsParams, dtype=np.float32):
    """Full pose path: conv3d then tokenize, in one pass.

    Equivalent to pose_tokenize(pose_conv3d(z_pose, p), p) at float32; the
    dtype knob exists so gradient checks can run the identical computation
    in float64.  Returns (tokens, trace).
    """
    patches = patchify(z_pose.data[0].astype(dtype), p.patch)    # (S, fan)
    wmat = p.conv_w.reshape(p.conv_w.shape[0], -1).astype(dtype, copy=False)
    flat = patches @ wmat.T + p.conv_b.astype(dtype, copy=False)  # (S, D)
    if p.pos.shape[0] != flat.shape[0]:
        raise InvalidDimensionError(
            f"positional embedding has {p.pos.shape[0]} rows, token grid has {flat.shape[0]}"
        )
    proj = flat @ p.proj_w.T.astype(dtype, copy=False) + p.proj_b.astype(dtype, copy=False)
    pre = proj + p.pos.astype(dtype, copy=False)
    out, xhat, inv = layernorm(pre, p.ln_g.astype(dtype, copy=False),
                               p.ln_b.astype(dtype, copy=False))
    trace = {"flat": flat, "xhat": xhat, "inv": inv, "patches": patches,
             "dtype": dtype}
    return out, trace


def pafs_backward(trace, d_tokens: np.ndarray, p: PafsParams) -> dict:
    """Gradients of pafs_forward w.r.t. every pose-path parameter."""
    dtype = trace["dtype"]
    d_pre, d_g, d_b = layernorm_backward(d_tokens, trace["xhat"], trace["inv"],
                                         p.ln_g.astype(dtype, copy=False))
    d_pos = d_pre
    d_proj_w = d_pre.T @ trace["flat"]
    d_proj_b = d_pre.sum(axis=0)
    d_flat = d_pre @ p.proj_w.astype(dtype, copy=False)      # (S, D)
    d_conv_w = (d_flat.T @ trace["patches"]).reshape(p.conv_w.shape)
    d_conv_b = d_flat.sum(axis=0)
    return {
        "conv_w": d_conv_w, "conv_b": d_conv_b,
        "proj_w": d_proj_w, "proj_b": d_proj_b,
        "pos": d_pos.copy(), "ln_g": d_g, "ln_b": d_b,
    }


def patch_embed(z_concat: Grid, p: PatchEmbedParams) -> np.ndarray:
    """Per-patch linear projection of the 2C-channel latent to (S, D) tokens."""
    if z_concat.dims[0] != 1:
        raise InvalidDimensionError("patch embed expects batch 1")
    if z_concat.dims[1] != p.channels:
        raise InvalidDimensionError(
            f"expected {p.channels} channels after concatenation, got {z_concat.dims[1]}"
        )
    patches = patchify(z_concat.data[0], p.patch)
    return (patches @ p.w + p.b).astype(np.float32, copy=False)


def fuse_additive(pose: np.ndarray, video: np.ndarray) -> np.ndarray:
    """Element-wise token addition; shapes must match exactly."""
    if pose.shape != video.shape:
        raise InvalidDimensionError(f"token shape mismatch: {pose.shape} vs {video.shape}")
    return pose + video


def audio_feature_map(values: np.ndarray, dim: int) -> np.ndarray:
    """Fixed sinusoidal lift of scalars to width ``dim`` (sin/cos pairs)."""
    if dim % 2:
        raise InvalidDimensionError("feature width must be even")
    freqs = np.pi * np.arange(1, dim // 2 + 1, dtype=np.float64)
    phase = values[:, None].astype(np.float64) * freqs
    feats = np.empty((len(values), dim), dtype=np.float32)
    feats[:, 0::2] = np.sin(phase)
    feats[:, 1::2] = np.cos(phase)
    return feats


def embed_audio(signal: np.ndarray, f_prime: int, dim: int) -> np.ndarray:
    """Mean-pool an envelope of length F to f' slots, lift to (f', D) tokens.

    One token per temporal patch row; broadcast across spatial tokens at
    fusion time.
    """
    signal = np.asarray(signal, dtype=np.float32)
    if signal.ndim != 1:
        raise InvalidInputError("audio signal must be one-dimensional")
    if len(signal) % f_prime:
        raise InvalidInputError(
            f"signal length {len(signal)} not divisible into {f_prime} slots"
        )
    slots = signal.reshape(f_prime, -1).mean(axis=1, dtype=np.float64)
    return audio_feature_map(slots, dim)


def broadcast_audio(aud: np.ndarray, spatial: int) -> np.ndarray:
    """Repeat each temporal audio token over the h'*w' spatial positions."""
    return np.repeat(aud, spatial, axis=0)
