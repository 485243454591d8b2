"""Talking-shapes video dubbing: flow-matching latent generation with
pose-token conditioning, masked latent injection, and soft compositing."""

__version__ = "0.1.0"

from .codec import CodecSpec
from .composite import CompositeSpec
from .frames import FrameSequence
from .grid import Grid
from .sampler import SamplerConfig
from .schedule import NoiseSchedule
from .velocity import ModelConfig, ModelParams

__all__ = [
    "CodecSpec", "CompositeSpec", "FrameSequence", "Grid",
    "SamplerConfig", "NoiseSchedule", "ModelConfig", "ModelParams",
    "__version__",
]
