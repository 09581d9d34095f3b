"""Seeded random streams."""

import zlib
from typing import Any, Dict, Optional, Sequence

import numpy as np


class Rng:
    """A PCG64 generator that can derive named, independent child streams.

    The same seed yields the same draws on every platform numpy supports.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    @property
    def state(self) -> Dict[str, Any]:
        return self.generator.bit_generator.state

    def child(self, name: str) -> "Rng":
        key = zlib.crc32(name.encode("utf-8"))
        derived = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, key]).generate_state(1, np.uint64)[0]
        return Rng(int(derived))

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        return self.generator.normal(0.0, std, size=shape)

    def uniform(self, shape=None, low: float = 0.0, high: float = 1.0):
        return self.generator.uniform(low, high, size=shape)

    def integers(self, low: int, high: Optional[int] = None, shape=None):
        return self.generator.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(self, n: int, p: Optional[Sequence[float]] = None) -> int:
        return int(self.generator.choice(n, p=p))

    def random(self) -> float:
        return float(self.generator.random())
