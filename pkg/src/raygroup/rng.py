"""Deterministic 64-bit RNG used by the synthetic scene generator.

SplitMix64 (Steele/Lea/Flood mixing function): the i-th output of a stream
seeded with ``s`` is ``mix(s + i * GAMMA)`` in wrapping uint64 arithmetic,
which makes the stream trivially vectorizable and bit-reproducible in any
language.  Doubles are built from the top 53 bits.
"""

from __future__ import annotations

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_DOUBLE_SCALE = float(2.0**-53)


def mix64(state: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = state.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


class SplitMix64:
    """Counter-based SplitMix64 stream.

    Draw ``n`` values at once or one at a time; the stream is identical
    either way because output ``i`` depends only on ``seed + i * GAMMA``.
    """

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._counter = 0

    def next_uint64(self, n: int = 1) -> np.ndarray:
        if n < 0:
            raise ValueError("n must be non-negative")
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        return mix64(self._seed + idx * GAMMA)

    def uniform(self, low: float = 0.0, high: float = 1.0, n: int = 1) -> np.ndarray:
        """n doubles uniform in [low, high)."""
        u = (self.next_uint64(n) >> np.uint64(11)).astype(np.float64) * _DOUBLE_SCALE
        return low + u * (high - low)

    def uniform1(self, low: float = 0.0, high: float = 1.0) -> float:
        return float(self.uniform(low, high, 1)[0])

    def integers(self, bound: int, n: int = 1) -> np.ndarray:
        """n ints uniform-ish in [0, bound) via floor(u * bound)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        u = self.uniform(0.0, 1.0, n)
        return np.minimum((u * bound).astype(np.int64), bound - 1)
