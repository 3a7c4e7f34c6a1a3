"""xorshift64* with splitmix64 seeding.

The generator is spelled out rather than taken from :mod:`random` so that a
seed names the same stream in every implementation of the toolchain.

* seeding: the state is the first output of splitmix64 on the seed
  (gamma ``0x9E3779B97F4A7C15``, multipliers ``0xBF58476D1CE4E5B9`` and
  ``0x94D049BB133111EB``, shifts 30/27/31). A zero state is replaced by
  the gamma.
* step: ``x ^= x >> 12; x ^= x << 25; x ^= x >> 27`` then output
  ``x * 0x2545F4914F6CDD1D mod 2**64``.
* ``uniform()`` takes the top 53 bits of an output; ``randint(lo, hi)``
  reduces an output modulo the range width (bias below 2**-40 for any
  range used here).
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MULT = 0x2545F4914F6CDD1D


def splitmix64(seed: int) -> int:
    z = (seed + GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class XorShift64Star:
    def __init__(self, seed: int):
        self.state = splitmix64(seed & MASK64) or GAMMA

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * MULT) & MASK64

    def uniform(self) -> float:
        """Float in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randint(self, lo: int, hi: int) -> int:
        """Integer in ``[lo, hi]``; no draw is made when the range is a single value."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        if hi == lo:
            return lo
        return lo + self.next_u64() % (hi - lo + 1)

    def chance(self, p: float) -> bool:
        """Bernoulli trial; probabilities 0 and 1 consume no draw."""
        if p <= 0.0:
            return False
        if p >= 1.0:
            return True
        return self.uniform() < p

    def choice(self, seq):
        return seq[self.randint(0, len(seq) - 1)]
