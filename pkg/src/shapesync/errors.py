"""Exception hierarchy shared by all shapesync modules."""


class ShapesyncError(Exception):
    """Base class for every error raised by this package."""


class InvalidDimensionError(ShapesyncError):
    """Tensor extents are inconsistent with what an operation requires."""


class InvalidInputError(ShapesyncError):
    """Input values violate a precondition (non-binary mask, NaN, ...)."""


class GridFormatError(ShapesyncError):
    """A serialized grid / checkpoint file is malformed or truncated."""


class ScheduleRangeError(ShapesyncError):
    """Timestep outside [0, T]."""


class MissingTraceError(ShapesyncError):
    """backward() called without a train-mode forward trace."""


class CheckpointMismatchError(ShapesyncError):
    """Checkpoint tensors do not match the current model configuration."""


class ConfigError(ShapesyncError):
    """Run configuration failed validation.  Carries the offending key path."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class TrainingDivergedError(ShapesyncError):
    """Loss became non-finite.  Carries the step index."""

    def __init__(self, step: int, message: str = "loss is not finite"):
        super().__init__(f"step {step}: {message}")
        self.step = step


class UndefinedMetricError(ShapesyncError):
    """A metric has no defined value on this input (empty region, constant series)."""


class HeadDetectionError(ShapesyncError):
    """No head-colored pixels found in a frame."""
