"""Portable seeded random numbers.

The generator is SplitMix64 (Steele, Lea & Flood 2014): a 64-bit counter
advanced by the golden-ratio increment and passed through a fixed mixing
function. Every derived operation below is defined in terms of ``next_u64``
with integer arithmetic (floats only where noted), so a corpus generated from
a seed is the same on every platform and Python version. The standard
``random`` module is avoided on purpose: its ``choice``/``sample`` algorithms
have changed between CPython releases.
"""

from __future__ import annotations

import hashlib
from typing import Sequence, TypeVar

T = TypeVar("T")

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def derive_seed(seed: int, *keys: int | str) -> int:
    """Independent 64-bit sub-seed for ``(seed, *keys)``; used for per-dialogue streams."""
    text = ":".join(str(k) for k in (seed, *keys))
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


class SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling (no modulo bias)."""
        if n <= 0:
            raise ValueError("randbelow() needs n > 0")
        limit = ((1 << 64) // n) * n
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def choice(self, seq: Sequence[T]) -> T:
        if not seq:
            raise IndexError("choice from an empty sequence")
        return seq[self.randbelow(len(seq))]

    def chance(self, p: float) -> bool:
        return self.random() < p

    def weighted(self, options: Sequence[tuple[T, float]]) -> T:
        """Pick a key from ``(key, weight)`` pairs; weights need not sum to one."""
        total = sum(w for _, w in options)
        if total <= 0:
            raise ValueError("weighted choice needs positive total weight")
        x = self.random() * total
        acc = 0.0
        for key, w in options:
            acc += w
            if x < acc:
                return key
        # rounding can leave x == total; return the last positive-weight option
        for key, w in reversed(options):
            if w > 0:
                return key
        raise AssertionError("unreachable")

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, seq: Sequence[T], k: int) -> list[T]:
        pool = list(seq)
        self.shuffle(pool)
        return pool[:k]
