"""Counter-based normal increments.

Every block of draws is addressed by ``(seed, stream key, step)``: the key is
turned into a :class:`numpy.random.SeedSequence` spawn key and feeds a Philox
counter generator. A path is a row of the block, so path ``i`` sees the same
numbers however many paths are drawn, in whatever order the blocks are
requested, and whichever worker requests them.
"""

from __future__ import annotations

from typing import Tuple

import attr
import numpy as np


def _as_key(key) -> Tuple[int, ...]:
    if isinstance(key, (int, np.integer)):
        return (int(key),)
    return tuple(int(k) for k in key)


@attr.s(frozen=True, kw_only=True)
class CounterRNG:
    seed: int = attr.ib(converter=int)
    key: Tuple[int, ...] = attr.ib(default=(), converter=_as_key)

    @seed.validator
    def _check_seed(self, attribute, value):
        if value < 0:
            raise ValueError('seed must be non-negative')

    def substream(self, *key) -> CounterRNG:
        return attr.evolve(self, key=self.key + _as_key(key))

    def generator(self, step: int) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.key + (int(step),))
        return np.random.Generator(np.random.Philox(sequence))

    def normals(self, step: int, n_paths: int, k: int) -> np.ndarray:
        """Standard normal block of shape (n_paths, k) for one time step."""
        return self.generator(step).standard_normal((n_paths, k))
