"""Flow-matching training: target, interpolant, weighting, optimizer, gradient check.

The regression target is the straight-line velocity eps - z_video; the model
input is the channel concatenation of the interpolant z_t with the clean
video latent (a literal-noise variant that feeds eps instead of z_t is kept
behind ``literal_eq2`` for ablation).  Optimization is plain SGD with
momentum 0.9 so every run is exactly reproducible.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import velocity
from .codec import CodecSpec, concat_channels, encode_frames
from .errors import InvalidDimensionError, InvalidInputError, TrainingDivergedError
from .frames import FrameSequence
from .grid import Grid, gaussian_noise
from .pafs import embed_audio, pafs_backward, pafs_forward
from .rng import RngStream
from .schedule import NoiseSchedule, schedule_eval
from .velocity import ModelConfig, ModelParams


@dataclass
class ClipLatents:
    """Per-clip training tensors: encoded video + pose latents and the audio envelope."""

    z_video: Grid
    z_pose: Grid
    audio: np.ndarray


@dataclass
class TrainConfig:
    lr: float = 0.05
    batch_size: int = 4
    steps: int = 2000
    omega: str = "uniform"          # "uniform" | "mid-weighted"
    momentum: float = 0.9
    seed: int = 0
    literal_eq2: bool = False
    use_pose: bool = True
    checkpoint_every: int = 500

    def __post_init__(self):
        if self.lr < 0 or self.batch_size < 1 or self.steps < 1:
            raise InvalidDimensionError("rates and counts must be positive")
        if self.omega not in ("uniform", "mid-weighted"):
            raise InvalidDimensionError(f"unknown omega kind {self.omega!r}")


def prepare_clip(video: FrameSequence, pose_video: FrameSequence,
                 audio, spec: CodecSpec) -> ClipLatents:
    return ClipLatents(
        z_video=encode_frames(video, spec),
        z_pose=encode_frames(pose_video, spec),
        audio=np.asarray(audio, dtype=np.float32),
    )


def flow_target(eps: Grid, z_video: Grid) -> Grid:
    """Straight-line velocity eps - z_video."""
    if eps.dims != z_video.dims:
        raise InvalidDimensionError(f"shape mismatch {eps.dims} vs {z_video.dims}")
    return Grid(eps.data - z_video.data)


def interpolate(z_video: Grid, eps: Grid, t: int, s: NoiseSchedule) -> Grid:
    """z_t = alpha_t * z_video + sigma_t * eps on the training schedule."""
    if eps.dims != z_video.dims:
        raise InvalidDimensionError(f"shape mismatch {eps.dims} vs {z_video.dims}")
    alpha, sigma = schedule_eval(s, t)
    return Grid(np.float32(alpha) * z_video.data + np.float32(sigma) * eps.data)


def omega_weight(kind: str, t: int, steps: int) -> float:
    """Timestep weight; mid-weighted is 4*tb*(1-tb) normalized to mean 1 over {1..T}."""
    if kind == "uniform":
        return 1.0
    tb = t / steps
    ks = np.arange(1, steps + 1) / steps
    norm = float(np.mean(4.0 * ks * (1.0 - ks)))
    return 4.0 * tb * (1.0 - tb) / norm


def flow_loss(clips, ts, eps_grids, params: ModelParams, s: NoiseSchedule,
              omega: str = "uniform", literal_eq2: bool = False,
              use_pose: bool = True, dtype=np.float32):
    """Weighted flow-matching MSE over a batch, with full-model gradients.

    ``ts`` and ``eps_grids`` carry one timestep draw and one noise grid per
    clip.  Returns (loss, grads) where grads covers every model tensor
    including the pose path.
    """
    cfg = params.cfg
    b = len(clips)
    if not (len(ts) == len(eps_grids) == b):
        raise InvalidDimensionError("clips, ts and eps draws must align")
    fp = cfg.token_grid[0]

    z_concats, targets, pose_toks, pose_traces, aud_toks, weights = [], [], [], [], [], []
    for clip, t, eps in zip(clips, ts, eps_grids):
        z_in = eps if literal_eq2 else interpolate(clip.z_video, eps, int(t), s)
        z_concats.append(concat_channels(z_in, clip.z_video).data[0])
        targets.append(flow_target(eps, clip.z_video).data[0])
        if use_pose:
            tok, tr = pafs_forward(clip.z_pose, params.pafs, dtype=dtype)
        else:
            tok, tr = np.zeros((cfg.tokens, cfg.dim), dtype=dtype), None
        pose_toks.append(tok)
        pose_traces.append(tr)
        aud_toks.append(embed_audio(clip.audio, fp, cfg.dim))
        weights.append(omega_weight(omega, int(t), s.steps))

    z_batch = Grid(np.stack(z_concats))
    t_bar = np.asarray(ts, dtype=np.float64) / s.steps
    v_hat, trace = velocity.forward(
        z_batch, t_bar, np.stack(aud_toks), np.stack(pose_toks), params,
        mode="train", dtype=dtype,
    )

    target = np.stack(targets).astype(np.float64)
    resid = trace["out_vol"].astype(np.float64) - target
    w = np.asarray(weights, dtype=np.float64)
    per_clip = (resid ** 2).mean(axis=(1, 2, 3, 4))
    loss = float((w * per_clip).mean())

    n_elem = int(np.prod(resid.shape[1:]))
    d_vhat = (2.0 * w[:, None, None, None, None] * resid / (n_elem * b)).astype(dtype)
    grads, d_pose = velocity.backward(trace, d_vhat, params)

    for name in ("conv_w", "conv_b", "proj_w", "proj_b", "pos", "ln_g", "ln_b"):
        grads[f"pafs.{name}"] = np.zeros_like(params.tensors[f"pafs.{name}"], dtype=dtype)
    if use_pose:
        for i, tr in enumerate(pose_traces):
            pg = pafs_backward(tr, d_pose[i], params.pafs)
            for name, g in pg.items():
                grads[f"pafs.{name}"] += g
    return loss, grads


@dataclass
class SgdState:
    velocity: dict = field(default_factory=dict)

    @staticmethod
    def for_params(params: ModelParams) -> "SgdState":
        return SgdState({k: np.zeros_like(v) for k, v in params.tensors.items()})


def sgd_momentum_update(params: ModelParams, grads: dict, state: SgdState,
                        lr: float, momentum: float = 0.9) -> None:
    """In-place SGD with momentum: m <- mu*m + g; p <- p - lr*m."""
    for name, p in params.tensors.items():
        g = grads[name].astype(np.float32, copy=False)
        m = state.velocity[name]
        m *= np.float32(momentum)
        m += g
        p -= np.float32(lr) * m


def grad_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum())
                             for g in grads.values())))


def train_step(params: ModelParams, state: SgdState, clips, cfg: TrainConfig,
               s: NoiseSchedule, rng: RngStream):
    """One optimizer step on one batch.  Returns the pre-update loss."""
    ts = [int(t) for t in rng.integers(1, s.steps + 1, (len(clips),))]
    eps = [gaussian_noise(c.z_video.dims, rng) for c in clips]
    try:
        loss, grads = flow_loss(clips, ts, eps, params, s, omega=cfg.omega,
                                literal_eq2=cfg.literal_eq2, use_pose=cfg.use_pose)
    except InvalidInputError:
        # non-finite activations surface as a rejected output grid
        raise TrainingDivergedError(-1) from None
    if not np.isfinite(loss):
        raise TrainingDivergedError(-1)
    sgd_momentum_update(params, grads, state, cfg.lr, cfg.momentum)
    return loss, grads


def train_run(clips, model_cfg: ModelConfig, cfg: TrainConfig, s: NoiseSchedule,
              out_dir=None, log=None):
    """Full training loop: returns trained params, writes loss CSV + checkpoints."""
    rng = RngStream(cfg.seed)
    params = velocity.init_params(model_cfg, rng.split("init"))
    state = SgdState.for_params(params)
    draw = rng.split("draws")
    writer = None
    csv_file = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        csv_file = open(os.path.join(out_dir, "loss.csv"), "w", newline="")
        writer = csv.writer(csv_file)
        writer.writerow(["step", "loss", "grad_norm"])
    try:
        for step in range(cfg.steps):
            idx = draw.integers(0, len(clips), (cfg.batch_size,))
            batch = [clips[int(i)] for i in idx]
            try:
                loss, grads = train_step(params, state, batch, cfg, s, draw)
            except TrainingDivergedError:
                raise TrainingDivergedError(step) from None
            if writer is not None:
                writer.writerow([step, f"{loss:.8f}", f"{grad_norm(grads):.8f}"])
            if log is not None and step % 100 == 0:
                log(step, loss)
            if out_dir is not None and cfg.checkpoint_every > 0 \
                    and (step + 1) % cfg.checkpoint_every == 0:
                velocity.save_checkpoint(
                    params, os.path.join(out_dir, f"ckpt_{step + 1:06d}.unis"))
        if out_dir is not None:
            velocity.save_checkpoint(params, os.path.join(out_dir, "model.unis"))
    finally:
        if csv_file is not None:
            csv_file.close()
    return params


def random_micro_batch(model_cfg: ModelConfig, seed: int = 0, clips: int = 1):
    """Small random clips for gradient checking (latents drawn i.i.d. normal)."""
    rng = RngStream(seed).split("microbatch")
    f = model_cfg.latent[0]
    out = []
    for _ in range(clips):
        dims = (1, model_cfg.channels) + tuple(model_cfg.latent)
        out.append(ClipLatents(
            z_video=gaussian_noise(dims, rng),
            z_pose=gaussian_noise(dims, rng),
            audio=rng.uniform((f,)),
        ))
    return out


def grad_check(params: ModelParams, micro_batch, s: NoiseSchedule,
               probes: int = 64, step: float = 1e-3, seed: int = 0,
               omega: str = "uniform", use_pose: bool = True) -> float:
    """Central finite differences vs analytic gradients.

    Samples up to ``probes`` coordinates per parameter group and returns the
    worst relative error  |g_a - g_n| / max(|g_a|, |g_n|, 1e-6).  Both sides
    run the forward in float64 so the comparison measures the backward
    derivation, not float32 round-off.
    """
    rng = RngStream(seed).split("gradcheck")
    ts = [int(t) for t in rng.integers(1, s.steps + 1, (len(micro_batch),))]
    eps = [gaussian_noise(c.z_video.dims, rng) for c in micro_batch]

    def loss_at(p):
        return flow_loss(micro_batch, ts, eps, p, s, omega=omega,
                         use_pose=use_pose, dtype=np.float64)[0]

    _, grads = flow_loss(micro_batch, ts, eps, params, s, omega=omega,
                         use_pose=use_pose, dtype=np.float64)
    worst = 0.0
    probe_rng = rng.split("probes")
    for name, arr in params.tensors.items():
        n = arr.size
        if n == 0:
            continue
        coords = (np.arange(n) if n <= probes
                  else probe_rng.integers(0, n, (probes,)))
        for c in np.unique(coords):
            flat = params.tensors[name].reshape(-1)
            orig = flat[c]
            flat[c] = orig + step
            p_plus = float(flat[c])       # actual stored value after f32 rounding
            lp = loss_at(params)
            flat[c] = orig - step
            p_minus = float(flat[c])
            lm = loss_at(params)
            flat[c] = orig
            g_num = (lp - lm) / (p_plus - p_minus)
            g_ana = float(grads[name].reshape(-1)[c])
            rel = abs(g_ana - g_num) / max(abs(g_ana), abs(g_num), 1e-6)
            worst = max(worst, rel)
    return worst
