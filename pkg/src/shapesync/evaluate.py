"""Desk-scale quality metrics: background PSNR, audio-lip sync correlation,
pose drift, boundary smoothness, and generation success.

All metrics are deterministic functions of their inputs.  Aggregates over a
corpus are medians, which keeps a single diverged seed from dominating.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import HeadDetectionError, InvalidDimensionError, UndefinedMetricError
from .frames import FrameSequence
from .synth import FEATURE_VALUE, HEAD_VALUE, PoseTrack

DARK_THRESHOLD = 0.45
PSNR_FLOOR = 10.0
_HEAD_BAND = 0.08


def background_psnr(x_hat: FrameSequence, x_video: FrameSequence,
                    dilated_mask: np.ndarray) -> float:
    """PSNR (peak 1.0) over pixels outside the dilated mouth mask.

    Returns +inf when the outside region is reproduced exactly.
    """
    if x_hat.shape != x_video.shape:
        raise InvalidDimensionError(f"shape mismatch {x_hat.shape} vs {x_video.shape}")
    outside = np.asarray(dilated_mask) == 0.0
    if not outside.any():
        raise UndefinedMetricError("mask covers every pixel; no background region")
    diff = (x_hat.frames.astype(np.float64) - x_video.frames.astype(np.float64))
    mse = float((diff[outside] ** 2).mean())
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def mouth_darkness(frames: FrameSequence, mouth_mask: np.ndarray,
                   threshold: float = DARK_THRESHOLD) -> np.ndarray:
    """Per-frame count of dark pixels inside the mouth mask."""
    gray = frames.frames.mean(axis=-1, dtype=np.float64)
    dark = (gray < threshold) & (np.asarray(mouth_mask) > 0.5)
    return dark.sum(axis=(1, 2)).astype(np.float64)


def sync_corr(frames: FrameSequence, audio: np.ndarray,
              mouth_mask: np.ndarray) -> float:
    """Pearson correlation between mouth darkness and the audio envelope."""
    audio = np.asarray(audio, dtype=np.float64)
    if frames.shape[0] < 3:
        raise UndefinedMetricError("need at least 3 frames for a correlation")
    if np.ptp(audio) == 0.0:
        raise UndefinedMetricError("audio signal is constant")
    counts = mouth_darkness(frames, mouth_mask)
    if np.ptp(counts) == 0.0:
        raise UndefinedMetricError("mouth darkness series is constant")
    return float(np.corrcoef(counts, audio)[0, 1])


def head_pixels(frames: FrameSequence) -> np.ndarray:
    """Boolean head detector: head-surface band or dark feature pixels."""
    gray = frames.frames.mean(axis=-1, dtype=np.float64)
    return (np.abs(gray - HEAD_VALUE) < _HEAD_BAND) | (gray < FEATURE_VALUE + 0.1)


def pose_drift(frames: FrameSequence, track: PoseTrack) -> float:
    """Mean distance between detected head centroid and the pose track center."""
    mask = head_pixels(frames)
    f, h, w = mask.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    total = 0.0
    for i in range(f):
        m = mask[i]
        n = m.sum()
        if n == 0:
            raise HeadDetectionError(f"frame {i}: no head-colored pixels")
        cx = float((xx * m).sum() / n)
        cy = float((yy * m).sum() / n)
        dx = cx - track.centers[i, 0]
        dy = cy - track.centers[i, 1]
        total += float(np.hypot(dx, dy))
    return total / f


@dataclass
class EvalReport:
    """Per-clip metric rows plus median aggregates."""

    rows: list = field(default_factory=list)

    def add(self, clip: str, **metrics):
        self.rows.append({"clip": clip, **metrics})

    def _values(self, key):
        return [r[key] for r in self.rows
                if r.get(key) is not None and np.isfinite(r[key])]

    def median(self, key):
        vals = self._values(key)
        return float(np.median(vals)) if vals else None

    @property
    def gsr(self) -> float:
        """Fraction of clips that completed with background PSNR >= 10 dB."""
        if not self.rows:
            return 0.0
        ok = sum(1 for r in self.rows
                 if not r.get("error")
                 and r.get("background_psnr") is not None
                 and r["background_psnr"] >= PSNR_FLOOR)
        return ok / len(self.rows)

    def summary(self) -> dict:
        return {
            "background_psnr": self.median("background_psnr"),
            "sync_corr": self.median("sync_corr"),
            "pose_drift": self.median("pose_drift"),
            "boundary_grad": self.median("boundary_grad"),
            "gsr": self.gsr,
        }
