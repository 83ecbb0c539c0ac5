"""Seeded, splittable random streams for order-independent Monte Carlo."""

from __future__ import annotations

from typing import List

import numpy as np

# Fixed block length for vectorised sampling; results depend on it, never on thread count.
SAMPLE_BLOCK = 4096


class SeededRNG:
    """Wrapper around numpy SeedSequence giving one independent stream per index."""

    def __init__(self, seed: int, *stream: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self._seed = int(seed)
        self._stream = tuple(int(s) for s in stream)

    @property
    def seed(self) -> int:
        return self._seed

    def child(self, index: int) -> np.random.Generator:
        """Generator for sub-task ``index``, independent of evaluation order."""
        seq = np.random.SeedSequence(self._seed, spawn_key=self._stream + (int(index),))
        return np.random.default_rng(seq)

    def fork(self, tag: int) -> SeededRNG:
        """Derived family of streams for a named sub-computation."""
        return SeededRNG(self._seed, *self._stream, int(tag))

    def child_seeds(self, count: int) -> List[int]:
        """Integer seeds for ``count`` sub-tasks (e.g. bootstrap resamples)."""
        return [int(self.child(i).integers(0, 2 ** 31 - 1)) for i in range(count)]


def block_slices(n: int, block: int = SAMPLE_BLOCK) -> List[slice]:
    return [slice(start, min(start + block, n)) for start in range(0, n, block)]
