"""Frame sequences in pixel space and bit-exact Netpbm I/O.

Frames are stored as a float32 array of shape (F, H, W, C) with C in {1, 3}
and values clamped to [0, 1] on construction.  On disk, each frame is one
binary Netpbm file (P5 for gray, P6 for RGB, maxval 255) named
frame_%05d.pgm / .ppm.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import GridFormatError, InvalidDimensionError, InvalidInputError


@dataclass(frozen=True)
class FrameSequence:
    """F frames of H x W x {1|3} pixels in [0, 1]."""

    frames: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.frames)
        if a.ndim != 4:
            raise InvalidDimensionError(f"frames must be (F, H, W, C), got shape {a.shape}")
        if a.shape[3] not in (1, 3):
            raise InvalidDimensionError(f"channel count must be 1 or 3, got {a.shape[3]}")
        if not np.isfinite(a).all():
            raise InvalidInputError("frames contain non-finite values")
        a = np.clip(a.astype(np.float32), 0.0, 1.0)
        object.__setattr__(self, "frames", a)

    @property
    def shape(self) -> tuple:
        return self.frames.shape


def _write_netpbm(path, frame_u8: np.ndarray) -> None:
    h, w, c = frame_u8.shape
    magic = b"P5" if c == 1 else b"P6"
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(frame_u8.tobytes())


def _read_netpbm(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    m = re.match(rb"(P[56])\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s", blob)
    if not m:
        raise GridFormatError(f"{path}: not a binary PGM/PPM file")
    magic, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise GridFormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    c = 1 if magic == b"P5" else 3
    payload = blob[m.end():]
    if len(payload) != w * h * c:
        raise GridFormatError(f"{path}: expected {w * h * c} pixel bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, c)


def save_frames(seq: FrameSequence, directory) -> None:
    """Write one Netpbm file per frame; values are quantized to 8 bits."""
    os.makedirs(directory, exist_ok=True)
    ext = "pgm" if seq.shape[3] == 1 else "ppm"
    u8 = np.rint(seq.frames * 255.0).astype(np.uint8)
    for i in range(seq.shape[0]):
        _write_netpbm(os.path.join(directory, f"frame_{i:05d}.{ext}"), u8[i])


def load_frames(directory) -> FrameSequence:
    names = sorted(
        n for n in os.listdir(directory)
        if re.fullmatch(r"frame_\d{5}\.(pgm|ppm)", n)
    )
    if not names:
        raise InvalidInputError(f"no frame files in {directory}")
    frames = [_read_netpbm(os.path.join(directory, n)) for n in names]
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise InvalidInputError(f"mixed frame sizes in {directory}: {sorted(shapes)}")
    stack = np.stack(frames).astype(np.float32) / 255.0
    return FrameSequence(stack)
