"""Deterministic 64-bit PRNG used everywhere randomness is needed.

A splitmix64 stream: tiny, seedable, identical on every platform and
backend, which is what makes traces a pure function of (scenario, seed).
The simulation kernel inlines the same recurrence; a test pins the two
implementations to each other.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1


class SplitMix64:
    """splitmix64 with the standard finalizer constants."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n).  Modulo bias is < n / 2**64."""
        if n <= 0:
            raise ValueError(f"below() needs a positive bound, got {n}")
        return self.next_u64() % n

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends included."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.below(hi - lo + 1)

    def chance(self) -> int:
        """One fair bit."""
        return self.next_u64() & 1
