"""Deterministic, addressable random-number streams.

One master seed fixes every noise draw of a filter pass (common random
numbers), so the estimated log-likelihood is a deterministic function of the
model parameters.  Streams are derived with the counter-based Philox
generator:

* key     = (master_seed, purpose)
* counter = (0, channel, time_index, particle_index)   [low word first]

Each address therefore owns a disjoint 2^64-block region of the Philox
counter space: streams never overlap, the draws yielded by one address do not
depend on the order in which other addresses are queried, and adding
particles or time steps never shifts draws consumed by existing addresses.

Hot paths (particle propagation, resampling) consume *block* streams
addressed by (purpose, time) with particle index 0: a single vectorised draw
of shape (n, channels) whose row i belongs to particle i.  Because generator
output is a fixed sequence, row i is independent of n (prefix property).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

__all__ = [
    "Purpose",
    "StreamAddress",
    "CRNLayout",
    "derive_stream",
    "standard_normal",
    "uniform01",
]


class Purpose(IntEnum):
    """Top-level stream family; part of the Philox key."""

    DYNAMICS_NOISE = 0
    INITIAL_STATE = 1
    RESAMPLING = 2
    MOMENTUM = 3
    PROPOSAL = 4


@dataclass(frozen=True)
class StreamAddress:
    """Hierarchical address of one random stream."""

    purpose: Purpose
    time_index: int = 0
    particle_index: int = 0
    channel: int = 0

    def __post_init__(self):
        if self.time_index < 0 or self.particle_index < 0 or self.channel < 0:
            raise ValueError(f"stream address indices must be >= 0: {self}")


@dataclass(frozen=True)
class CRNLayout:
    """Immutable master seed plus the derivation scheme documented above."""

    master_seed: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master seed must be an unsigned 64-bit integer")

    def stream(self, addr: StreamAddress) -> np.random.Generator:
        """Generator whose output depends only on (master_seed, addr)."""
        key = np.array([self.master_seed, int(addr.purpose)], dtype=np.uint64)
        counter = np.array(
            [0, addr.channel, addr.time_index, addr.particle_index],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def block_stream(self, purpose: Purpose, time_index: int) -> np.random.Generator:
        """Stream shared by all particles of one (purpose, time) slot."""
        return self.stream(StreamAddress(purpose, time_index))

    def dynamics_noise(self, time_index: int, n: int, channels: int) -> np.ndarray:
        """(n, channels) standard normals; row i belongs to particle i."""
        return self.block_stream(Purpose.DYNAMICS_NOISE, time_index).standard_normal(
            (n, channels)
        )

    def resampling_uniforms(self, time_index: int, n: int) -> np.ndarray:
        """n uniforms for the resampler, consumed in particle order."""
        return self.block_stream(Purpose.RESAMPLING, time_index).random(n)


def derive_stream(layout: CRNLayout, addr: StreamAddress) -> np.random.Generator:
    """Derive the stream for one address; see module docstring for the scheme."""
    return layout.stream(addr)


def standard_normal(stream: np.random.Generator) -> float:
    """One N(0, 1) draw; advances the stream."""
    return float(stream.standard_normal())


def uniform01(stream: np.random.Generator) -> float:
    """One U[0, 1) draw; advances the stream."""
    return float(stream.random())
