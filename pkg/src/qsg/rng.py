"""Seeded, splittable random streams.

Every stream is a Philox (counter-based) generator keyed by
``(seed, stream)`` through :class:`numpy.random.SeedSequence`, so trial ``i``
of an ensemble sees the same draws no matter how many workers run or in
which order trials finish.
"""
from dataclasses import dataclass

import numpy as np

# purpose tags for derived streams
TRIAL = 1
INIT = 2
PAIR = 3
MESSAGE = 4
DRIFT = 5
PROBE = 6
SNAPSHOT = 7
RESPONSE = 8

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RandomSource:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not (0 <= self.stream <= _MASK64):
            raise ValueError(f"stream must be a 64-bit unsigned integer, got {self.stream}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(ss))

    def derive(self, purpose: int, index: int = 0) -> "RandomSource":
        """Child stream for ``(purpose, index)``; distinct children never share draws."""
        key = np.random.SeedSequence(
            self.seed, spawn_key=(self.stream, purpose, index)
        ).generate_state(2, dtype=np.uint32)
        return RandomSource(self.seed, (int(key[0]) << 32 | int(key[1])) & _MASK64)


def as_generator(rng) -> np.random.Generator:
    """Accept a RandomSource, a Generator, or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RandomSource):
        return rng.generator()
    if rng is None:
        raise ValueError("an explicit random source is required")
    return RandomSource(int(rng)).generator()
