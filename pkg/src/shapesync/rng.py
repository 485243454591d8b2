"""Counter-based deterministic random streams.

Every draw opens a fresh Philox generator keyed by (seed, counter), so a
stream's state is fully described by two 64-bit integers and sequences are
reproducible across platforms.  Streams split by label via SHA-256 of the
parent seed and the label, which gives child streams that do not overlap in
key space (up to hash collisions).
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import InvalidInputError

_MASK64 = (1 << 64) - 1


class RngStream:
    """Splittable counter-based random stream.

    Each sampling call consumes one counter tick; the (seed, counter) pair
    is the complete state, so a stream can be reconstructed mid-sequence.
    """

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self.counter = int(counter)

    def _next_generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.counter], dtype=np.uint64)
        self.counter += 1
        return np.random.Generator(np.random.Philox(key=key))

    def split(self, label: str) -> "RngStream":
        """Derive an independent child stream from a text label."""
        h = hashlib.sha256(f"{self.seed}:{label}".encode("utf-8")).digest()
        return RngStream(int.from_bytes(h[:8], "little"))

    def normal(self, shape=()) -> np.ndarray:
        """Standard normal draws, float32."""
        return self._next_generator().standard_normal(shape, dtype=np.float32)

    def uniform(self, shape=()) -> np.ndarray:
        return self._next_generator().random(shape, dtype=np.float32)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        """Uniform integers in [low, high)."""
        if high <= low:
            raise InvalidInputError(f"empty integer range [{low}, {high})")
        return self._next_generator().integers(low, high, size=shape)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, counter={self.counter})"
