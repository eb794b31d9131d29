"""Seeded randomness primitives: pairwise-independent hashing, trailing
zeros, and deterministic per-record sampling coins.

Everything is a pure function of the seed, so sketches rebuilt from the same
inputs are bit-identical and extraction-time checks can replay compression
choices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import InputError

# With p ~ 2^(2L) and x < 2^L the product a*x stays below 2^64 only for
# L <= 21, which covers instances up to a million tuples.
_MAX_BITS = 21

# splitmix64 constants
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def is_prime(m: int) -> bool:
    """Deterministic Miller-Rabin, exact for m < 3.3e24."""
    if m < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if m % p == 0:
            return m == p
    d, s = m - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, m)
        if x in (1, m - 1):
            continue
        for _ in range(s - 1):
            x = x * x % m
            if x == m - 1:
                break
        else:
            return False
    return True


@lru_cache(maxsize=None)
def smallest_prime_above(m: int) -> int:
    p = m + 1
    while not is_prime(p):
        p += 1
    return p


@dataclass(frozen=True)
class PairwiseHash:
    """x -> ((a*x + b) mod p) mod 2^L with p the smallest prime > 2^(2L).

    p well above the output range keeps the family pairwise independent
    after the fold: with p barely above 2^L the map degenerates into a
    near-permutation whose collision rate is far below 2^-L.
    """

    a: int
    b: int
    p: int
    bits: int

    def __call__(self, x: int) -> int:
        return ((self.a * x + self.b) % self.p) & ((1 << self.bits) - 1)

    def apply(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.uint64)
        out = (np.uint64(self.a) * xs + np.uint64(self.b)) % np.uint64(self.p)
        return out & np.uint64((1 << self.bits) - 1)


def draw_family(seed: int, count: int, bits: int) -> list[PairwiseHash]:
    """``count`` independent pairwise hashes on [0, 2^bits), reproducible
    from ``seed``."""
    if count < 1:
        raise InputError("hash family needs count >= 1")
    if not 1 <= bits <= _MAX_BITS:
        raise InputError(f"bits must be in 1..{_MAX_BITS}")
    p = smallest_prime_above(1 << (2 * bits))
    rng = np.random.default_rng([np.uint64(seed & (2**64 - 1)), 0x68617368])
    a = rng.integers(1, p, size=count, dtype=np.int64)
    b = rng.integers(0, p, size=count, dtype=np.int64)
    return [PairwiseHash(int(a[i]), int(b[i]), p, bits) for i in range(count)]


def domain_bits(n: int) -> int:
    """Hash-domain width for an instance of n tuples."""
    if n <= 1:
        return 1
    return int(np.ceil(np.log2(n))) + 1


def trail(v, bits: int):
    """Number of trailing zero bits; trail(0) = bits by convention.

    Accepts a scalar or an array of values < 2^bits.
    """
    arr = np.asarray(v, dtype=np.int64)
    low = arr & -arr  # lowest set bit as a power of two
    out = np.where(arr == 0, bits, np.log2(np.maximum(low, 1)).astype(np.int64))
    if np.isscalar(v) or arr.ndim == 0:
        return int(out)
    return out.astype(np.uint8)


def mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer over uint64 arrays (wraparound arithmetic)."""
    x = np.atleast_1d(np.asarray(x, dtype=np.uint64)).copy()
    with np.errstate(over="ignore"):
        x += _GOLDEN
        x ^= x >> np.uint64(30)
        x *= _MIX1
        x ^= x >> np.uint64(27)
        x *= _MIX2
        x ^= x >> np.uint64(31)
    return x


def child_seed(seed: int, *tags: int) -> int:
    """A derived 64-bit seed for an independent substream."""
    x = np.uint64(seed & (2**64 - 1))
    for tag in tags:
        x = mix64(x ^ np.uint64(tag & (2**64 - 1)))[0]
    return int(x)


def coin_uniform(seed: int, stream: int, index: int, keys) -> np.ndarray:
    """Uniform [0,1) coins, one per key, as a pure function of
    (seed, stream, index, key).

    Used for per-tuple sampling decisions so that tests can replay the exact
    coins the compression algorithm saw.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    base = np.uint64(child_seed(seed, stream, index))
    mixed = mix64(keys ^ base)
    return mixed.astype(np.float64) / float(2**64)
