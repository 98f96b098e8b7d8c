"""Seeded, independently addressable random streams."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Offset separating Φ (frequency) streams from data streams of the same trial.
PHI_STREAM_OFFSET = 2**32


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Distinct pairs give statistically independent streams (they are spawned
    from a common ``SeedSequence``); identical pairs reproduce identical draws.
    """

    seed: int
    stream_id: int = 0
    subpath: tuple[int, ...] = ()

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative integers")
        if self.seed >= 2**64 or self.stream_id >= 2**64:
            raise ValueError("seed and stream_id must fit in 64 bits")

    def generator(self) -> np.random.Generator:
        """Return a fresh generator positioned at the start of the stream."""
        seq = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.stream_id, *self.subpath)
        )
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, index: int) -> "RngStream":
        """Sub-stream used e.g. for the coordinates of a multi-dimensional fBm."""
        return RngStream(self.seed, self.stream_id, (*self.subpath, index))


def as_generator(rng: RngStream | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return rng.generator()
