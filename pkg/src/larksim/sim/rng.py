"""Counter-based, splittable 64-bit random streams (SplitMix64 finalizer over a counter)."""
from __future__ import annotations

import hashlib

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK
    return z ^ (z >> 31)


class Stream:
    """The i-th draw is a pure function of (key, i), so streams never interfere."""

    def __init__(self, seed: int, name: str):
        h = hashlib.sha256(f"{seed}:{name}".encode()).digest()
        self.key = int.from_bytes(h[:8], "little")
        self.counter = 0

    def next64(self) -> int:
        self.counter += 1
        return _mix((self.key + self.counter * GOLDEN) & MASK)

    def random(self) -> float:
        return (self.next64() >> 11) * (1.0 / (1 << 53))

    def randint(self, a: int, b: int) -> int:
        """Uniform integer in [a, b]."""
        return a + self.next64() % (b - a + 1)

    def choice(self, seq):
        return seq[self.next64() % len(seq)]

    def sample(self, seq, k: int):
        pool = list(seq)
        out = []
        for _ in range(min(k, len(pool))):
            out.append(pool.pop(self.next64() % len(pool)))
        return out
