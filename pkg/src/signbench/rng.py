"""Splittable 64-bit PRNG used everywhere determinism must be auditable.

The generator is SplitMix64 (Steele, Lea & Flood): state advances by the
64-bit golden-gamma constant and each output is a finalizing mix of the new
state. It is tiny, has published test vectors, and is trivially portable, so
attack synthesis and split shuffling stay bit-reproducible across
implementations.

Reference vectors (seed 0, first three outputs):
    0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 finalizer: avalanching bijection on 64-bit ints."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fnv1a64(data: str) -> int:
    """FNV-1a hash of a UTF-8 string, for deriving stream tags."""
    h = 0xCBF29CE484222325
    for byte in data.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & MASK64
    return h


class SplitMix64:
    """Deterministic stream of 64-bit integers with substream splitting."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & MASK64
        return mix64(self._state)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def below(self, n: int) -> int:
        """Uniform int in [0, n), unbiased via rejection."""
        if n <= 0:
            raise ValueError(f"below() needs n >= 1, got {n}")
        threshold = ((1 << 64) // n) * n
        while True:
            u = self.next_u64()
            if u < threshold:
                return u % n

    def randint(self, lo: int, hi: int) -> int:
        """Uniform int in [lo, hi] inclusive."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.below(hi - lo + 1)

    def choice(self, seq):
        if not seq:
            raise ValueError("choice() on empty sequence")
        return seq[self.below(len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """First k entries of a Fisher-Yates shuffle of range(n), draw order."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n}")
        pool = list(range(n))
        picked = []
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
            picked.append(pool[i])
        return picked

    def split(self, tag: str = "") -> "SplitMix64":
        """Child generator whose stream is independent of later parent draws."""
        return SplitMix64(mix64(self.next_u64() ^ fnv1a64(tag)))


def derive_seed(seed: int, *tags: str) -> int:
    """Stable 64-bit seed from a base seed and a chain of string tags."""
    z = mix64(seed)
    for tag in tags:
        z = mix64(z ^ fnv1a64(tag))
    return z
