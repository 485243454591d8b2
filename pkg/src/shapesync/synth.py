"""Procedural "talking shapes" corpus: videos whose mouth aperture is a known
function of the audio envelope and whose head follows a known pose track.

Each clip is a head disc with two eyes and an elliptical mouth on a gradient
background.  The vertical mouth semi-axis is 1 + 7 * audio(t) pixels, so the
dark-pixel count inside the mouth mask is an affine-monotone readout of the
audio.  The pose video renders the keypoints as white dots on black; the
mouth mask is the ellipse support at maximum aperture (audio-independent).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .frames import FrameSequence, load_frames, save_frames
from .rng import RngStream

AUDIO_KINDS = ("sine", "two-tone", "random-walk")
POSE_KINDS = ("static", "pan", "nod")
BACKGROUND_KINDS = ("gradient", "gradient+distractor")

HEAD_VALUE = 0.8
FEATURE_VALUE = 0.1
MAX_APERTURE = 8.0  # 1 + 7 * audio at audio = 1


@dataclass
class PoseTrack:
    """Per-frame head keypoints in pixel units ((x, y) convention)."""

    centers: np.ndarray        # (F, 2)
    theta: np.ndarray          # (F,)
    mouth_corners: np.ndarray  # (F, 2, 2)
    head_radius: float = 20.0


@dataclass(frozen=True)
class SceneSpec:
    frames: int = 16
    height: int = 64
    width: int = 64
    head_radius: float = 20.0
    background: str = "gradient"
    mouth_half_width: float = 6.0
    seed: int = 0

    def __post_init__(self):
        if self.head_radius >= min(self.height, self.width) / 3 + 1e-9:
            raise InvalidInputError(
                f"head radius {self.head_radius} must be < min(H, W)/3"
            )
        if self.background not in BACKGROUND_KINDS:
            raise InvalidInputError(f"unknown background kind {self.background!r}")


def gen_audio(kind: str, frames: int, seed: int) -> np.ndarray:
    """Per-frame envelope in [0, 1]; deterministic per seed."""
    if frames < 1:
        raise InvalidInputError("need at least one frame")
    t = np.arange(frames, dtype=np.float64)
    if kind == "sine":
        return (0.5 + 0.5 * np.sin(2.0 * np.pi * 2.0 * t / frames)).astype(np.float32)
    if kind == "two-tone":
        s = 0.5 * (np.sin(2.0 * np.pi * 2.0 * t / frames)
                   + np.sin(2.0 * np.pi * 5.0 * t / frames))
        return (0.5 + 0.5 * s).astype(np.float32)
    if kind == "random-walk":
        rng = RngStream(seed).split("audio")
        steps = 0.1 * rng.normal((frames,))
        out = np.empty(frames, dtype=np.float32)
        level = 0.5
        for i in range(frames):
            level = float(np.clip(level + steps[i], 0.0, 1.0))
            out[i] = level
        return out
    raise InvalidInputError(f"unknown audio kind {kind!r}")


def _rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _mouth_geometry(centers, theta, head_radius, half_width):
    f = len(theta)
    anchors = np.empty((f, 2))
    corners = np.empty((f, 2, 2))
    for i in range(f):
        r = _rot(theta[i])
        anchors[i] = centers[i] + r @ np.array([0.0, 0.5 * head_radius])
        corners[i, 0] = anchors[i] + r @ np.array([-half_width, 0.0])
        corners[i, 1] = anchors[i] + r @ np.array([half_width, 0.0])
    return anchors, corners


def gen_pose(kind: str, frames: int, seed: int, dims, head_radius: float = 20.0,
             mouth_half_width: float = 6.0) -> PoseTrack:
    """Head trajectory: static, a +-8 px horizontal pan, or a +-0.2 rad nod."""
    h, w = dims
    cx, cy = w / 2.0, h / 2.0
    t = np.arange(frames, dtype=np.float64)
    if kind == "static":
        centers = np.tile([cx, cy], (frames, 1))
        theta = np.zeros(frames)
    elif kind == "pan":
        xs = np.linspace(cx - 8.0, cx + 8.0, frames)
        centers = np.stack([xs, np.full(frames, cy)], axis=1)
        theta = np.zeros(frames)
    elif kind == "nod":
        centers = np.tile([cx, cy], (frames, 1))
        theta = 0.2 * np.sin(2.0 * np.pi * t / frames)
    else:
        raise InvalidInputError(f"unknown pose kind {kind!r}")
    margin = head_radius + 1.0
    if (centers[:, 0].min() < margin or centers[:, 0].max() > w - 1 - margin
            or centers[:, 1].min() < margin or centers[:, 1].max() > h - 1 - margin):
        raise InvalidInputError("head would exit the frame")
    _, corners = _mouth_geometry(centers, theta, head_radius, mouth_half_width)
    return PoseTrack(centers=centers, theta=theta, mouth_corners=corners,
                     head_radius=head_radius)


def _background(spec: SceneSpec) -> np.ndarray:
    yy, xx = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    bg = 0.3 + 0.3 * (xx + yy) / (spec.width - 1 + spec.height - 1)
    if spec.background == "gradient+distractor":
        d2 = (xx - 6.0) ** 2 + (yy - 6.0) ** 2
        bg = np.where(d2 <= 4.0 ** 2, 0.55, bg)
    return bg


def _dot(img, x, y):
    h, w = img.shape
    r0, r1 = max(int(round(y)) - 1, 0), min(int(round(y)) + 1, h - 1)
    c0, c1 = max(int(round(x)) - 1, 0), min(int(round(x)) + 1, w - 1)
    img[r0:r1 + 1, c0:c1 + 1] = 1.0


def render_scene(spec: SceneSpec, pose: PoseTrack, audio: np.ndarray):
    """Rasterize (video, pose_video, mouth_mask) for one clip.

    The mask covers the mouth ellipse at maximum aperture, mirroring
    production masks that must cover every possible mouth state.
    """
    f = len(audio)
    if len(pose.theta) != f:
        raise InvalidInputError(
            f"audio length {f} != pose track length {len(pose.theta)}"
        )
    h, w = spec.height, spec.width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    bg = _background(spec)
    anchors, _ = _mouth_geometry(pose.centers, pose.theta, pose.head_radius,
                                 spec.mouth_half_width)

    video = np.empty((f, h, w, 3), dtype=np.float32)
    pose_video = np.zeros((f, h, w, 3), dtype=np.float32)
    mask = np.zeros((f, h, w), dtype=np.float32)
    half_w = max(spec.mouth_half_width, 0.5)   # degenerate mouths keep 1 px support
    for i in range(f):
        cx, cy = pose.centers[i]
        th = pose.theta[i]
        frame = bg.copy()
        head = (xx - cx) ** 2 + (yy - cy) ** 2 <= pose.head_radius ** 2
        frame[head] = HEAD_VALUE
        r = _rot(th)
        for sx in (-1.0, 1.0):
            ex, ey = np.array([cx, cy]) + r @ np.array(
                [sx * 0.35 * pose.head_radius, -0.35 * pose.head_radius])
            eye = (xx - ex) ** 2 + (yy - ey) ** 2 <= 1.6 ** 2
            frame[eye] = FEATURE_VALUE
        ax, ay = anchors[i]
        dx, dy = xx - ax, yy - ay
        dxr = np.cos(th) * dx + np.sin(th) * dy
        dyr = -np.sin(th) * dx + np.cos(th) * dy
        aperture = 1.0 + 7.0 * float(audio[i])
        mouth = (dxr / half_w) ** 2 + (dyr / aperture) ** 2 <= 1.0
        frame[mouth] = FEATURE_VALUE
        video[i] = frame[..., None]

        support = (dxr / half_w) ** 2 + (dyr / MAX_APERTURE) ** 2 <= 1.0
        mask[i] = support.astype(np.float32)

        pv = pose_video[i, :, :, 0]
        _dot(pv, cx, cy)
        hx, hy = np.array([cx, cy]) + r @ np.array([0.0, -0.7 * pose.head_radius])
        _dot(pv, hx, hy)
        for corner in pose.mouth_corners[i]:
            _dot(pv, corner[0], corner[1])
        pose_video[i] = pv[..., None]

    return FrameSequence(video), FrameSequence(pose_video), mask


def make_clip(seed: int, spec_defaults: SceneSpec = SceneSpec()):
    """Draw clip-level variation (audio/pose/background kinds) from a seed."""
    rng = RngStream(seed).split("clip")
    audio_kind = AUDIO_KINDS[int(rng.integers(0, len(AUDIO_KINDS)))]
    pose_kind = POSE_KINDS[int(rng.integers(0, len(POSE_KINDS)))]
    background = BACKGROUND_KINDS[int(rng.integers(0, 2))]
    spec = SceneSpec(
        frames=spec_defaults.frames, height=spec_defaults.height,
        width=spec_defaults.width, head_radius=spec_defaults.head_radius,
        background=background, mouth_half_width=spec_defaults.mouth_half_width,
        seed=seed,
    )
    audio = gen_audio(audio_kind, spec.frames, seed)
    pose = gen_pose(pose_kind, spec.frames, seed, (spec.height, spec.width),
                    spec.head_radius, spec.mouth_half_width)
    video, pose_video, mask = render_scene(spec, pose, audio)
    meta = {
        "seed": seed, "audio_kind": audio_kind, "pose_kind": pose_kind,
        "background": background,
        "frames": spec.frames, "height": spec.height, "width": spec.width,
        "head_radius": spec.head_radius,
        "mouth_half_width": spec.mouth_half_width,
        "track": {
            "centers": pose.centers.tolist(),
            "theta": pose.theta.tolist(),
            "mouth_corners": pose.mouth_corners.tolist(),
        },
    }
    return {"video": video, "pose_video": pose_video, "mask": mask,
            "audio": audio, "track": pose, "meta": meta}


def write_clip(directory, clip) -> None:
    os.makedirs(directory, exist_ok=True)
    save_frames(clip["video"], os.path.join(directory, "frames"))
    save_frames(clip["pose_video"], os.path.join(directory, "pose"))
    save_frames(FrameSequence(clip["mask"][..., None]), os.path.join(directory, "mask"))
    with open(os.path.join(directory, "audio.json"), "w") as f:
        json.dump([float(a) for a in clip["audio"]], f)
    with open(os.path.join(directory, "meta.json"), "w") as f:
        json.dump(clip["meta"], f, indent=1, sort_keys=True)


def read_clip(directory) -> dict:
    video = load_frames(os.path.join(directory, "frames"))
    pose_video = load_frames(os.path.join(directory, "pose"))
    mask_seq = load_frames(os.path.join(directory, "mask"))
    mask = (mask_seq.frames[..., 0] >= 0.5).astype(np.float32)
    with open(os.path.join(directory, "audio.json")) as f:
        audio = np.asarray(json.load(f), dtype=np.float32)
    with open(os.path.join(directory, "meta.json")) as f:
        meta = json.load(f)
    tr = meta["track"]
    track = PoseTrack(
        centers=np.asarray(tr["centers"], dtype=np.float64),
        theta=np.asarray(tr["theta"], dtype=np.float64),
        mouth_corners=np.asarray(tr["mouth_corners"], dtype=np.float64),
        head_radius=float(meta["head_radius"]),
    )
    return {"video": video, "pose_video": pose_video, "mask": mask,
            "audio": audio, "track": track, "meta": meta}


def generate_corpus(out_dir, n_clips: int, seed: int = 0,
                    spec_defaults: SceneSpec = SceneSpec(),
                    include_degenerate: bool = False) -> list:
    """Write clip_%04d directories; returns the clip directory paths.

    With ``include_degenerate``, the last two clips are edge cases: a
    zero-width mouth and a constant-silent static clip.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i in range(n_clips):
        clip_seed = seed * 1_000_003 + i
        degenerate = include_degenerate and i >= n_clips - 2
        if not degenerate:
            clip = make_clip(clip_seed, spec_defaults)
        elif i == n_clips - 2:
            # zero-width mouth
            spec = SceneSpec(frames=spec_defaults.frames, height=spec_defaults.height,
                             width=spec_defaults.width, head_radius=spec_defaults.head_radius,
                             background="gradient", mouth_half_width=0.0, seed=clip_seed)
            audio = gen_audio("sine", spec.frames, clip_seed)
            pose = gen_pose("static", spec.frames, clip_seed,
                            (spec.height, spec.width), spec.head_radius, 0.0)
            video, pose_video, mask = render_scene(spec, pose, audio)
            clip = {"video": video, "pose_video": pose_video, "mask": mask,
                    "audio": audio, "track": pose,
                    "meta": {"seed": clip_seed, "audio_kind": "sine",
                             "pose_kind": "static", "background": "gradient",
                             "frames": spec.frames, "height": spec.height,
                             "width": spec.width, "head_radius": spec.head_radius,
                             "mouth_half_width": 0.0, "degenerate": "zero-width-mouth",
                             "track": {"centers": pose.centers.tolist(),
                                       "theta": pose.theta.tolist(),
                                       "mouth_corners": pose.mouth_corners.tolist()}}}
        else:
            # silent audio, static pose
            spec = SceneSpec(frames=spec_defaults.frames, height=spec_defaults.height,
                             width=spec_defaults.width, head_radius=spec_defaults.head_radius,
                             background="gradient", seed=clip_seed)
            audio = np.zeros(spec.frames, dtype=np.float32)
            pose = gen_pose("static", spec.frames, clip_seed,
                            (spec.height, spec.width), spec.head_radius)
            video, pose_video, mask = render_scene(spec, pose, audio)
            clip = {"video": video, "pose_video": pose_video, "mask": mask,
                    "audio": audio, "track": pose,
                    "meta": {"seed": clip_seed, "audio_kind": "silent",
                             "pose_kind": "static", "background": "gradient",
                             "frames": spec.frames, "height": spec.height,
                             "width": spec.width, "head_radius": spec.head_radius,
                             "mouth_half_width": spec.mouth_half_width,
                             "degenerate": "silent-static",
                             "track": {"centers": pose.centers.tolist(),
                                       "theta": pose.theta.tolist(),
                                       "mouth_corners": pose.mouth_corners.tolist()}}}
        path = os.path.join(out_dir, f"clip_{i:04d}")
        write_clip(path, clip)
        paths.append(path)
    return paths


def list_clips(corpus_dir) -> list:
    if not os.path.isdir(corpus_dir):
        raise InvalidInputError(f"corpus directory {corpus_dir} does not exist")
    names = sorted(n for n in os.listdir(corpus_dir) if n.startswith("clip_"))
    if not names:
        raise InvalidInputError(f"no clips under {corpus_dir}")
    return [os.path.join(corpus_dir, n) for n in names]
