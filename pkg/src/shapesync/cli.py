"""Command-line entry point: synth | train | dub | composite | eval | sweep | gradcheck.

Every command resolves a config (defaults + optional JSON file + ``--set``
overrides), echoes it into the output directory as resolved_config.json, and
exits nonzero with a single ``error: <key>: <message>`` line on failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from . import composite as comp_mod
from . import config as config_mod
from . import pipeline, synth, train, velocity
from .codec import CodecSpec
from .composite import CompositeSpec
from .errors import ConfigError, ShapesyncError
from .evaluate import EvalReport
from .frames import load_frames, save_frames
from .sampler import SamplerConfig
from .schedule import NoiseSchedule


def _out_dir(args, cfg, command):
    if args.out:
        return args.out
    stamp = time.strftime("%Y%m%d-%H%M%S")
    name = f"{command}-{stamp}-{config_mod.config_hash(cfg)}"
    return os.path.join(cfg["paths"]["out"], name)


def _scene_defaults(cfg):
    sy = cfg["synth"]
    return synth.SceneSpec(frames=sy["frames"], height=sy["height"],
                           width=sy["width"], head_radius=sy["head_radius"])


def _objects(cfg):
    s = NoiseSchedule(cfg["schedule"]["kind"], cfg["schedule"]["steps"])
    codec = CodecSpec(cfg["codec"]["spatial_factor"], cfg["codec"]["temporal_factor"])
    comp = CompositeSpec(cfg["composite"]["dilate_radius"], cfg["composite"]["blur_sigma"])
    samp = SamplerConfig(tau_inj=cfg["sampler"]["tau_inj"], steps=s.steps,
                         injection_level=cfg["sampler"]["injection_level"],
                         seed=cfg["eval"]["dub_seed"])
    return s, codec, comp, samp


def _load_corpus(corpus_dir, limit=None):
    paths = synth.list_clips(corpus_dir)
    if limit:
        paths = paths[:limit]
    return {os.path.basename(p): synth.read_clip(p) for p in paths}


def cmd_synth(args, cfg):
    out = _out_dir(args, cfg, "synth")
    config_mod.write_resolved(cfg, out)
    defaults = _scene_defaults(cfg)
    synth.generate_corpus(os.path.join(out, "train"), cfg["synth"]["train_clips"],
                          seed=cfg["seed"], spec_defaults=defaults)
    synth.generate_corpus(os.path.join(out, "eval"), cfg["synth"]["eval_clips"],
                          seed=cfg["seed"] + 1, spec_defaults=defaults,
                          include_degenerate=True)
    print(f"corpus written to {out}")
    return 0


def _train_corpus_dir(corpus):
    sub = os.path.join(corpus, "train")
    return sub if os.path.isdir(sub) else corpus


def cmd_train(args, cfg):
    out = _out_dir(args, cfg, "train")
    config_mod.write_resolved(cfg, out)
    codec = CodecSpec(cfg["codec"]["spatial_factor"], cfg["codec"]["temporal_factor"])
    s = NoiseSchedule(cfg["schedule"]["kind"], cfg["schedule"]["steps"])
    clip_dirs = synth.list_clips(_train_corpus_dir(args.corpus))
    clips = []
    for p in clip_dirs:
        c = synth.read_clip(p)
        clips.append(train.prepare_clip(c["video"], c["pose_video"], c["audio"], codec))
    tcfg = train.TrainConfig(
        lr=cfg["train"]["lr"], batch_size=cfg["train"]["batch_size"],
        steps=cfg["train"]["steps"], omega=cfg["train"]["omega"],
        momentum=cfg["train"]["momentum"], seed=cfg["seed"],
        literal_eq2=cfg["train"]["literal_eq2"], use_pose=cfg["train"]["use_pose"],
        checkpoint_every=cfg["train"]["checkpoint_every"],
    )
    mcfg = config_mod.model_config_from(cfg)
    train.train_run(clips, mcfg, tcfg, s, out_dir=out,
                    log=lambda step, loss: print(f"step {step}: loss {loss:.5f}"))
    print(f"checkpoints and loss.csv written to {out}")
    return 0


def cmd_dub(args, cfg):
    out = _out_dir(args, cfg, "dub")
    config_mod.write_resolved(cfg, out)
    s, codec, comp, samp = _objects(cfg)
    mcfg = config_mod.model_config_from(cfg)
    params = velocity.load_checkpoint(args.checkpoint, mcfg)
    clips = _load_corpus(args.corpus, limit=args.clips)
    for name, clip in clips.items():
        result = pipeline.dub_clip(clip, params, codec, samp, s, comp,
                                   seed=cfg["eval"]["dub_seed"],
                                   use_pose=cfg["train"]["use_pose"])
        clip_out = os.path.join(out, name)
        save_frames(result["x_gen"], os.path.join(clip_out, "gen"))
        save_frames(result["x_hat"], os.path.join(clip_out, "composited"))
        from .grid import save_grid
        save_grid(result["z0"], os.path.join(clip_out, "latent.grd"))
    print(f"dubbed {len(clips)} clips into {out}")
    return 0


def cmd_composite(args, cfg):
    out = _out_dir(args, cfg, "composite")
    config_mod.write_resolved(cfg, out)
    comp = CompositeSpec(cfg["composite"]["dilate_radius"], cfg["composite"]["blur_sigma"])
    x_gen = load_frames(args.gen)
    x_video = load_frames(args.video)
    mask_seq = load_frames(args.mask)
    mask = (mask_seq.frames[..., 0] >= 0.5).astype(np.float32)
    weights = comp_mod.soft_mask(mask, comp)
    x_hat = comp_mod.blend(x_gen, x_video, weights)
    save_frames(x_hat, os.path.join(out, "composited"))
    print(f"composited frames written to {out}")
    return 0


def cmd_eval(args, cfg):
    out = _out_dir(args, cfg, "eval")
    config_mod.write_resolved(cfg, out)
    _, _, comp, _ = _objects(cfg)
    clips = _load_corpus(args.corpus, limit=args.clips)
    report = EvalReport()
    for name, clip in clips.items():
        try:
            if args.dubbed:
                x_gen = load_frames(os.path.join(args.dubbed, name, "gen"))
                x_hat = load_frames(os.path.join(args.dubbed, name, "composited"))
                result = {
                    "x_gen": x_gen, "x_hat": x_hat,
                    "weights": comp_mod.soft_mask(clip["mask"], comp),
                    "dilated_mask": comp_mod.dilate(clip["mask"], comp.dilate_radius),
                }
                row = pipeline.evaluate_dub(clip, result)
            else:
                row = pipeline.evaluate_ground_truth(clip, comp)
            report.add(name, **row)
        except ShapesyncError as e:
            report.add(name, error=str(e), background_psnr=None, sync_corr=None,
                       pose_drift=None, boundary_grad=None)
    csv_path = os.path.join(out, "eval.csv")
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["clip", "background_psnr", "sync_corr", "pose_drift",
                    "boundary_grad"])
        for row in report.rows:
            w.writerow([row["clip"]] + [pipeline._fmt(row.get(k)) for k in
                                        ("background_psnr", "sync_corr",
                                         "pose_drift", "boundary_grad")])
    summary = report.summary()
    for key, value in summary.items():
        print(f"{key}: {value}")
    print(f"report written to {csv_path}")
    return 0


def cmd_sweep(args, cfg):
    out = _out_dir(args, cfg, "sweep")
    config_mod.write_resolved(cfg, out)
    s, codec, comp, _ = _objects(cfg)
    mcfg = config_mod.model_config_from(cfg)
    params = velocity.load_checkpoint(args.checkpoint, mcfg)
    clips = _load_corpus(args.corpus, limit=args.clips)
    taus = [float(t) for t in args.taus.split(",")]
    seeds = [int(sd) for sd in args.seeds.split(",")]
    csv_path = os.path.join(out, "sweep.csv")
    rows = pipeline.tau_sweep(clips, params, taus, seeds, codec, s, comp,
                              injection_level=cfg["sampler"]["injection_level"],
                              use_pose=cfg["train"]["use_pose"], csv_path=csv_path)
    for tau, med in pipeline.sweep_medians(rows, "background_psnr").items():
        print(f"tau={tau}: median background_psnr {med}")
    print(f"sweep written to {csv_path}")
    return 0


def cmd_gradcheck(args, cfg):
    mcfg = config_mod.model_config_from(cfg)
    # shrink to a micro geometry: the check probes the full architecture
    from .velocity import ModelConfig
    micro = ModelConfig(channels=mcfg.channels, dim=mcfg.dim, hidden=mcfg.hidden,
                        blocks=mcfg.blocks, patch=mcfg.patch,
                        latent=(2, 4, 4), time_freqs=mcfg.time_freqs,
                        gelu=mcfg.gelu)
    from .rng import RngStream
    params = velocity.init_params(micro, RngStream(cfg["seed"]).split("gradcheck-init"))
    batch = train.random_micro_batch(micro, seed=cfg["seed"])
    s = NoiseSchedule(cfg["schedule"]["kind"], cfg["schedule"]["steps"])
    err = train.grad_check(params, batch, s, seed=cfg["seed"],
                           omega=cfg["train"]["omega"],
                           use_pose=cfg["train"]["use_pose"])
    print(f"max_rel_err {err:.3e}")
    return 0 if err <= 1e-3 else 1


def build_parser():
    p = argparse.ArgumentParser(prog="shapesync",
                                description="Talking-shapes dubbing pipeline")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config override, repeatable")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate the synthetic corpus")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_synth)

    tp = sub.add_parser("train", help="train the velocity network")
    tp.add_argument("--corpus", required=True)
    tp.add_argument("--out")
    tp.set_defaults(fn=cmd_train)

    dp = sub.add_parser("dub", help="run the full dub pipeline")
    dp.add_argument("--checkpoint", required=True)
    dp.add_argument("--corpus", required=True)
    dp.add_argument("--clips", type=int, help="limit clip count")
    dp.add_argument("--out")
    dp.add_argument("--tau-inj", type=float, dest="tau_inj")
    dp.add_argument("--steps", type=int)
    dp.add_argument("--injection-level", dest="injection_level")
    dp.add_argument("--dilate-radius", type=int, dest="dilate_radius")
    dp.add_argument("--blur-sigma", type=float, dest="blur_sigma")
    dp.set_defaults(fn=cmd_dub)

    cp = sub.add_parser("composite", help="blend-only from existing frames")
    cp.add_argument("--gen", required=True)
    cp.add_argument("--video", required=True)
    cp.add_argument("--mask", required=True)
    cp.add_argument("--out")
    cp.add_argument("--dilate-radius", type=int, dest="dilate_radius")
    cp.add_argument("--blur-sigma", type=float, dest="blur_sigma")
    cp.set_defaults(fn=cmd_composite)

    ep = sub.add_parser("eval", help="score ground truth or dubbed output")
    ep.add_argument("--corpus", required=True)
    ep.add_argument("--dubbed", help="dub output directory; omitted = score ground truth")
    ep.add_argument("--clips", type=int)
    ep.add_argument("--out")
    ep.set_defaults(fn=cmd_eval)

    wp = sub.add_parser("sweep", help="injection-ratio sweep")
    wp.add_argument("--checkpoint", required=True)
    wp.add_argument("--corpus", required=True)
    wp.add_argument("--taus", default="0.0,0.2,0.4,0.6,0.8,1.0")
    wp.add_argument("--seeds", default="0,1,2,3,4")
    wp.add_argument("--clips", type=int)
    wp.add_argument("--out")
    wp.set_defaults(fn=cmd_sweep)

    gp = sub.add_parser("gradcheck", help="finite-difference gradient check")
    gp.set_defaults(fn=cmd_gradcheck, out=None)
    return p


_FLAG_KEYS = {
    "tau_inj": "sampler.tau_inj",
    "steps": "schedule.steps",
    "injection_level": "sampler.injection_level",
    "dilate_radius": "composite.dilate_radius",
    "blur_sigma": "composite.blur_sigma",
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.set)
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    try:
        cfg = config_mod.load_config(args.config, overrides)
        return args.fn(args, cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ShapesyncError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
