"""Noise schedules: per-timestep (alpha, sigma) pairs for interpolation and injection.

Timesteps run t = 0 (clean data) to t = T (pure noise).  Two kinds:

* ``linear-flow``: (alpha, sigma) = (1 - t/T, t/T).  Matches the straight-line
  velocity target, so it is the default for both training interpolation and
  injection noising.
* ``variance-preserving``: (cos(pi t / 2T), sin(pi t / 2T)), which keeps
  alpha^2 + sigma^2 = 1 at every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ScheduleRangeError
from .grid import Grid
from .rng import RngStream

KINDS = ("linear-flow", "variance-preserving")


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str = "linear-flow"
    steps: int = 50

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown schedule kind {self.kind!r}")
        if self.steps < 1:
            raise InvalidInputError(f"step count must be positive, got {self.steps}")


def schedule_eval(s: NoiseSchedule, t: int) -> tuple:
    """Return (alpha_t, sigma_t) for integer t in [0, T]."""
    if not 0 <= t <= s.steps:
        raise ScheduleRangeError(f"t={t} outside [0, {s.steps}]")
    tbar = t / s.steps
    if s.kind == "linear-flow":
        return 1.0 - tbar, tbar
    return math.cos(math.pi * tbar / 2.0), math.sin(math.pi * tbar / 2.0)


def noise_to(s: NoiseSchedule, z_video: Grid, t: int, rng: RngStream) -> Grid:
    """alpha_t * z_video + sigma_t * eps' with eps' a fresh standard normal."""
    alpha, sigma = schedule_eval(s, t)
    eps = rng.normal(z_video.dims)
    return Grid(np.float32(alpha) * z_video.data + np.float32(sigma) * eps)
