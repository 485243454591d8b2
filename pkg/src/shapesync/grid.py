"""Rank-5 dense grids (batch, channels, frames, height, width) and their binary format.

Grids are the universal latent/pixel carrier.  Data is always float32 in
row-major order; lower-rank data embeds with singleton extents.  The binary
format is: magic "GRD1", u32 LE rank (always 5), five u32 LE extents, then
IEEE-754 f32 LE values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import GridFormatError, InvalidDimensionError, InvalidInputError
from .rng import RngStream

_MAGIC = b"GRD1"
_RANK = 5


@dataclass(frozen=True)
class Grid:
    """Immutable rank-5 float32 tensor (B, C, F, H, W)."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != _RANK:
            raise InvalidDimensionError(f"grid must be rank {_RANK}, got rank {a.ndim}")
        if a.dtype != np.float32:
            a = a.astype(np.float32)
        if not np.isfinite(a).all():
            raise InvalidInputError("grid contains non-finite values")
        object.__setattr__(self, "data", a)

    @property
    def dims(self) -> tuple:
        return self.data.shape

    @staticmethod
    def zeros(dims) -> "Grid":
        return Grid(np.zeros(dims, dtype=np.float32))

    @staticmethod
    def full(dims, value: float) -> "Grid":
        return Grid(np.full(dims, value, dtype=np.float32))


def gaussian_noise(dims, rng: RngStream) -> Grid:
    """I.i.d. standard normal grid; deterministic for a fixed stream state."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != _RANK:
        raise InvalidDimensionError(f"expected {_RANK} extents, got {len(dims)}")
    if any(d <= 0 for d in dims):
        raise InvalidDimensionError(f"all extents must be positive, got {dims}")
    return Grid(rng.normal(dims))


def save_grid(g: Grid, path) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _RANK))
        f.write(struct.pack("<5I", *g.dims))
        f.write(np.ascontiguousarray(g.data, dtype="<f4").tobytes())


def load_grid(path) -> Grid:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _MAGIC:
        raise GridFormatError(f"bad magic {blob[:4]!r}")
    if len(blob) < 4 + 4 + 4 * _RANK:
        raise GridFormatError("truncated header")
    (rank,) = struct.unpack_from("<I", blob, 4)
    if rank != _RANK:
        raise GridFormatError(f"unsupported rank {rank}")
    dims = struct.unpack_from("<5I", blob, 8)
    count = int(np.prod(dims, dtype=np.int64))
    payload = blob[8 + 4 * _RANK:]
    if len(payload) != 4 * count:
        raise GridFormatError(
            f"payload holds {len(payload) // 4} values, header promises {count}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return Grid(data.copy())
