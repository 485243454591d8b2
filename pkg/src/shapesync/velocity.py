"""Velocity prediction network: token-space forward pass, hand-derived backward,
and a bit-exact checkpoint format.

Architecture (per clip): patch-embed the 2C-channel latent, add pose tokens,
audio tokens (broadcast per temporal patch row) and a time embedding, run L
mixer blocks of {layernorm -> per-token MLP with GELU -> concat(token,
mean-over-tokens) -> context projection -> residual add}, then project each
token to a C * kf * ks * ks velocity patch and un-patchify.

Token mixing uses the mean-over-tokens context instead of attention: it has a
global receptive field and gradients that stay hand-derivable.  The text
condition is carried as an always-null token, which under additive fusion is
a no-op.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CheckpointMismatchError,
    GridFormatError,
    InvalidDimensionError,
    MissingTraceError,
)
from .grid import Grid
from .pafs import (
    PafsParams,
    PatchEmbedParams,
    audio_feature_map,
    broadcast_audio,
    init_pafs_params,
    init_patch_embed_params,
    layernorm,
    layernorm_backward,
    patchify,
    token_grid_shape,
    unpatchify,
)
from .rng import RngStream

_CKPT_MAGIC = b"UNIS"
_CKPT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 3            # latent channels C (input is 2C after concat)
    dim: int = 64                # token width D
    hidden: int = 128            # MLP hidden width
    blocks: int = 4              # mixer block count L
    patch: tuple = (1, 2, 2)     # (kf, ks, ks)
    latent: tuple = (16, 16, 16)  # (f, h, w)
    time_freqs: int = 32
    gelu: bool = True            # False -> identity activation (linear-only config)

    @property
    def token_grid(self) -> tuple:
        return token_grid_shape(self.latent, self.patch)

    @property
    def tokens(self) -> int:
        fp, hp, wp = self.token_grid
        return fp * hp * wp

    @property
    def patch_out(self) -> int:
        kf, ks, _ = self.patch
        return self.channels * kf * ks * ks


@dataclass
class ModelParams:
    cfg: ModelConfig
    tensors: dict = field(default_factory=dict)

    @property
    def pafs(self) -> PafsParams:
        t = self.tensors
        return PafsParams(
            conv_w=t["pafs.conv_w"], conv_b=t["pafs.conv_b"],
            proj_w=t["pafs.proj_w"], proj_b=t["pafs.proj_b"],
            pos=t["pafs.pos"], ln_g=t["pafs.ln_g"], ln_b=t["pafs.ln_b"],
        )

    @property
    def embed(self) -> PatchEmbedParams:
        return PatchEmbedParams(
            w=self.tensors["embed.w"], b=self.tensors["embed.b"],
            channels=2 * self.cfg.channels, patch=self.cfg.patch,
        )

    def count(self) -> int:
        return sum(int(a.size) for a in self.tensors.values())


def init_params(cfg: ModelConfig, rng: RngStream) -> ModelParams:
    d, hdim, pout = cfg.dim, cfg.hidden, cfg.patch_out
    kf, ks, _ = cfg.patch
    fan_in = 2 * cfg.channels * kf * ks * ks
    t = {}
    pafs = init_pafs_params(cfg.channels, d, cfg.patch, cfg.tokens, rng.split("pafs"))
    t["pafs.conv_w"], t["pafs.conv_b"] = pafs.conv_w, pafs.conv_b
    t["pafs.proj_w"], t["pafs.proj_b"] = pafs.proj_w, pafs.proj_b
    t["pafs.pos"], t["pafs.ln_g"], t["pafs.ln_b"] = pafs.pos, pafs.ln_g, pafs.ln_b
    emb = init_patch_embed_params(2 * cfg.channels, d, cfg.patch, rng.split("embed"))
    t["embed.w"], t["embed.b"] = emb.w, emb.b
    r = rng.split("net")
    t["time.w"] = (r.normal((2 * cfg.time_freqs, d)) / np.sqrt(2 * cfg.time_freqs)).astype(np.float32)
    t["time.b"] = np.zeros(d, dtype=np.float32)
    for l in range(cfg.blocks):
        t[f"block{l}.ln_g"] = np.ones(d, dtype=np.float32)
        t[f"block{l}.ln_b"] = np.zeros(d, dtype=np.float32)
        t[f"block{l}.w1"] = (r.normal((d, hdim)) / np.sqrt(d)).astype(np.float32)
        t[f"block{l}.b1"] = np.zeros(hdim, dtype=np.float32)
        t[f"block{l}.w2"] = (r.normal((hdim, d)) / np.sqrt(hdim)).astype(np.float32)
        t[f"block{l}.b2"] = np.zeros(d, dtype=np.float32)
        t[f"block{l}.ctx_w"] = (r.normal((2 * d, d)) / np.sqrt(2 * d)).astype(np.float32)
        t[f"block{l}.ctx_b"] = np.zeros(d, dtype=np.float32)
    t["head.w"] = (0.02 * r.normal((d, pout))).astype(np.float32)
    t["head.b"] = np.zeros(pout, dtype=np.float32)
    del fan_in
    return ModelParams(cfg=cfg, tensors=t)


_GELU_C0 = float(np.sqrt(2.0 / np.pi))
_GELU_C1 = 0.044715


def _act(x, use_gelu):
    if not use_gelu:
        return x, None
    c0 = x.dtype.type(_GELU_C0)
    c1 = x.dtype.type(_GELU_C1)
    th = np.tanh(c0 * (x + c1 * (x * x * x)))
    return x.dtype.type(0.5) * x * (th + x.dtype.type(1.0)), th


def _act_grad(x, th, use_gelu):
    if not use_gelu:
        return np.ones_like(x)
    c0 = x.dtype.type(_GELU_C0)
    c1 = x.dtype.type(_GELU_C1)
    half = x.dtype.type(0.5)
    one = x.dtype.type(1.0)
    du = c0 * (one + x.dtype.type(3.0) * c1 * (x * x))
    return half * (one + th) + half * x * (one - th ** 2) * du


def time_features(t_bar, freqs: int) -> np.ndarray:
    """Sinusoidal features of normalized time, shape (B, 2*freqs)."""
    t_bar = np.atleast_1d(np.asarray(t_bar, dtype=np.float64))
    return audio_feature_map(t_bar, 2 * freqs)


def _as_batch_tokens(tok, batch, name):
    if tok is None:
        return None
    tok = np.asarray(tok)
    if tok.ndim == 2:
        tok = np.broadcast_to(tok, (batch,) + tok.shape)
    if tok.shape[0] != batch:
        raise InvalidDimensionError(f"{name} tokens batch {tok.shape[0]} != {batch}")
    return tok


def forward(z_concat: Grid, t_bar, c_aud, pose, params: ModelParams,
            mode: str = "eval", dtype=np.float32):
    """Run the velocity network.

    ``t_bar`` is t/T, scalar or per-batch array.  ``c_aud`` is (f', D) or
    (B, f', D) audio tokens or None; ``pose`` is (S, D) or (B, S, D) pose
    tokens or None.  Returns (v_hat Grid, trace) where trace is None in eval
    mode.
    """
    cfg = params.cfg
    b, ch = z_concat.dims[:2]
    if ch != 2 * cfg.channels:
        raise InvalidDimensionError(f"expected {2 * cfg.channels} input channels, got {ch}")
    if z_concat.dims[2:] != tuple(cfg.latent):
        raise InvalidDimensionError(
            f"latent dims {z_concat.dims[2:]} != configured {tuple(cfg.latent)}"
        )
    fp, hp, wp = cfg.token_grid
    spatial = hp * wp
    t = {k: v.astype(dtype, copy=False) for k, v in params.tensors.items()}

    patches = np.stack([patchify(z_concat.data[i].astype(dtype), cfg.patch)
                        for i in range(b)])                       # (B, S, Pin)
    x = patches @ t["embed.w"] + t["embed.b"]                     # (B, S, D)

    pose_b = _as_batch_tokens(pose, b, "pose")
    if pose_b is not None:
        if pose_b.shape[1:] != (cfg.tokens, cfg.dim):
            raise InvalidDimensionError(
                f"pose tokens shape {pose_b.shape[1:]} != ({cfg.tokens}, {cfg.dim})"
            )
        x = x + pose_b.astype(dtype)
    aud_b = _as_batch_tokens(c_aud, b, "audio")
    if aud_b is not None:
        if aud_b.shape[1:] != (fp, cfg.dim):
            raise InvalidDimensionError(
                f"audio tokens shape {aud_b.shape[1:]} != ({fp}, {cfg.dim})"
            )
        aud_full = np.stack([broadcast_audio(aud_b[i].astype(dtype), spatial)
                             for i in range(b)])
        x = x + aud_full

    tb = np.asarray(t_bar, dtype=np.float64)
    tb = np.broadcast_to(np.atleast_1d(tb), (b,))
    tfeat = time_features(tb, cfg.time_freqs).astype(dtype)       # (B, 2K)
    temb = tfeat @ t["time.w"] + t["time.b"]                      # (B, D)
    x = x + temb[:, None, :]

    train = mode == "train"
    trace = {"patches": patches, "tfeat": tfeat, "blocks": []} if train else None

    for l in range(cfg.blocks):
        g, bb = t[f"block{l}.ln_g"], t[f"block{l}.ln_b"]
        n, xhat, inv = layernorm(x, g, bb)
        a1 = n @ t[f"block{l}.w1"] + t[f"block{l}.b1"]
        h1, th = _act(a1, cfg.gelu)
        m = h1 @ t[f"block{l}.w2"] + t[f"block{l}.b2"]
        ctx = m.mean(axis=1, dtype=np.float64).astype(dtype)      # (B, D)
        c = np.concatenate([m, np.broadcast_to(ctx[:, None, :], m.shape)], axis=-1)
        y = c @ t[f"block{l}.ctx_w"] + t[f"block{l}.ctx_b"]
        if train:
            trace["blocks"].append(
                {"xhat": xhat, "inv": inv, "n": n, "a1": a1, "th": th,
                 "h1": h1, "c": c}
            )
        x = x + y

    out = x @ t["head.w"] + t["head.b"]                           # (B, S, Pout)
    vol = np.stack([unpatchify(out[i], cfg.channels, cfg.latent, cfg.patch)
                    for i in range(b)])
    if train:
        trace["x_final"] = x
        trace["dtype"] = dtype
        trace["out_vol"] = vol        # pre-cast output, for full-precision losses
    v_hat = Grid(vol.astype(np.float32))
    return v_hat, trace


def backward(trace, d_vhat: Grid, params: ModelParams):
    """Exact reverse-mode gradients of forward.

    Returns (grads, d_pose_tokens) where grads maps the network tensor names
    (everything except the pafs.* group, which chains through pafs_backward
    on d_pose_tokens) to arrays of matching shape.
    """
    if trace is None:
        raise MissingTraceError("backward requires a train-mode forward trace")
    cfg = params.cfg
    dtype = trace["dtype"]
    t = {k: v.astype(dtype, copy=False) for k, v in params.tensors.items()}
    d_data = d_vhat.data if isinstance(d_vhat, Grid) else np.asarray(d_vhat)
    b = d_data.shape[0]
    if d_data.shape[1:] != (cfg.channels,) + tuple(cfg.latent):
        raise InvalidDimensionError("d_vhat shape does not match model output")

    grads = {}
    d_out = np.stack([patchify(d_data[i].astype(dtype), cfg.patch)
                      for i in range(b)])                          # (B, S, Pout)
    x_final = trace["x_final"]
    grads["head.w"] = np.einsum("bsd,bsp->dp", x_final, d_out)
    grads["head.b"] = d_out.sum(axis=(0, 1))
    d_x = d_out @ t["head.w"].T

    s = cfg.tokens
    for l in reversed(range(cfg.blocks)):
        blk = trace["blocks"][l]
        d_y = d_x                                   # residual: d_x_in starts as d_x
        d_c = d_y @ t[f"block{l}.ctx_w"].T
        grads[f"block{l}.ctx_w"] = np.einsum("bsd,bse->de", blk["c"], d_y)
        grads[f"block{l}.ctx_b"] = d_y.sum(axis=(0, 1))
        d_m = d_c[..., :cfg.dim].copy()
        d_ctx = d_c[..., cfg.dim:].sum(axis=1)      # (B, D)
        d_m += d_ctx[:, None, :] / s
        d_h1 = d_m @ t[f"block{l}.w2"].T
        grads[f"block{l}.w2"] = np.einsum("bsh,bsd->hd", blk["h1"], d_m)
        grads[f"block{l}.b2"] = d_m.sum(axis=(0, 1))
        d_a1 = d_h1 * _act_grad(blk["a1"], blk["th"], cfg.gelu)
        grads[f"block{l}.w1"] = np.einsum("bsd,bsh->dh", blk["n"], d_a1)
        grads[f"block{l}.b1"] = d_a1.sum(axis=(0, 1))
        d_n = d_a1 @ t[f"block{l}.w1"].T
        d_ln_in, d_g, d_bb = layernorm_backward(d_n, blk["xhat"], blk["inv"],
                                                t[f"block{l}.ln_g"])
        grads[f"block{l}.ln_g"] = d_g
        grads[f"block{l}.ln_b"] = d_bb
        d_x = d_x + d_ln_in

    d_temb = d_x.sum(axis=1)                        # (B, D)
    grads["time.w"] = trace["tfeat"].T @ d_temb
    grads["time.b"] = d_temb.sum(axis=0)
    d_pose_tokens = d_x                             # additive fusion passes grads through
    grads["embed.w"] = np.einsum("bsp,bsd->pd", trace["patches"], d_x)
    grads["embed.b"] = d_x.sum(axis=(0, 1))
    return grads, d_pose_tokens


def save_checkpoint(params: ModelParams, path) -> None:
    """Magic "UNIS", u32 version, u32 tensor count, then per tensor
    {u32 name length, name, u32 rank, u32 extents..., f32 LE data}."""
    buf = io.BytesIO()
    buf.write(_CKPT_MAGIC)
    buf.write(struct.pack("<II", _CKPT_VERSION, len(params.tensors)))
    for name, arr in params.tensors.items():
        nb = name.encode("utf-8")
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path, cfg: ModelConfig) -> ModelParams:
    """Load and validate a checkpoint against ``cfg``'s parameter layout."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _CKPT_MAGIC:
        raise GridFormatError(f"bad checkpoint magic {blob[:4]!r}")
    if len(blob) < 12:
        raise GridFormatError("truncated checkpoint header")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != _CKPT_VERSION:
        raise GridFormatError(f"unsupported checkpoint version {version}")
    off = 12
    tensors = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", blob, off); off += 4
            name = blob[off:off + nlen].decode("utf-8"); off += nlen
            (rank,) = struct.unpack_from("<I", blob, off); off += 4
            shape = struct.unpack_from(f"<{rank}I", blob, off); off += 4 * rank
            n = int(np.prod(shape, dtype=np.int64)) if rank else 1
            raw = blob[off:off + 4 * n]
            if len(raw) != 4 * n:
                raise GridFormatError(f"tensor {name}: truncated data")
            off += 4 * n
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    except struct.error as e:
        raise GridFormatError(f"truncated checkpoint: {e}") from None

    template = init_params(cfg, RngStream(0))
    for name, ref in template.tensors.items():
        if name not in tensors:
            raise CheckpointMismatchError(f"missing tensor {name}")
        if tensors[name].shape != ref.shape:
            raise CheckpointMismatchError(
                f"tensor {name}: checkpoint shape {tensors[name].shape}, "
                f"config expects {ref.shape}"
            )
    extra = set(tensors) - set(template.tensors)
    if extra:
        raise CheckpointMismatchError(f"unexpected tensor {sorted(extra)[0]}")
    return ModelParams(cfg=cfg, tensors={k: tensors[k] for k in template.tensors})
