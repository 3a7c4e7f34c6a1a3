from __future__ import annotations

import numpy as np

from cyanrep.rng import XorShift64Star, splitmix64


def reference_stream(seed, count):
    """Straight transcription of the generator on numpy uint64 arithmetic."""
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        x = z ^ (z >> np.uint64(31))
        out = []
        for _ in range(count):
            x ^= x >> np.uint64(12)
            x ^= x << np.uint64(25)
            x ^= x >> np.uint64(27)
            out.append(int(x * np.uint64(0x2545F4914F6CDD1D)))
    return out


def test_splitmix_first_output():
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_stream_matches_reference():
    for seed in (0, 1, 42, 2**64 - 1):
        rng = XorShift64Star(seed)
        assert [rng.next_u64() for _ in range(50)] == reference_stream(seed, 50)


def test_helpers_stay_in_range():
    rng = XorShift64Star(7)
    assert all(3 <= rng.randint(3, 9) <= 9 for _ in range(500))
    assert all(0.0 <= rng.uniform() < 1.0 for _ in range(500))


def test_degenerate_draws_consume_nothing():
    a, b = XorShift64Star(5), XorShift64Star(5)
    assert a.randint(4, 4) == 4 and not a.chance(0.0) and a.chance(1.0)
    assert a.next_u64() == b.next_u64()
