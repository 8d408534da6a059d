"""Seeded random streams.

Backed by numpy's PCG64 bit generator, whose output sequence for a given seed
is fixed across platforms and numpy releases. Independent child streams come
from :class:`numpy.random.SeedSequence` spawning.
"""

from __future__ import annotations

import numpy as np


class Rng:
    def __init__(self, seed: int | np.random.SeedSequence = 0):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            self._seq = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self.gen = np.random.Generator(np.random.PCG64(self._seq))

    def spawn(self, n: int = 1) -> list["Rng"]:
        return [Rng(s) for s in self._seq.spawn(n)]

    def child(self) -> "Rng":
        return self.spawn(1)[0]

    def normal(self, std: float, size, dtype=np.float32) -> np.ndarray:
        return (self.gen.standard_normal(size) * std).astype(dtype)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray:
        return self.gen.uniform(low, high, size)

    def integers(self, low: int, high: int | None = None, size=None):
        return self.gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def get_state(self) -> dict:
        return self.gen.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.gen.bit_generator.state = state
