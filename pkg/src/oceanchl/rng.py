"""Counter-based SplitMix64 random streams.

Every random decision in the package (shuffles, bootstrap draws, feature
subsets, extra-trees thresholds) comes from a stream identified by a 64-bit
key.  The k-th output of a stream (k = 0, 1, ...) is::

    mix64(key + (k + 1) * 0x9E3779B97F4A7C15  mod 2**64)

so any draw can be reproduced from ``(key, k)`` alone, the streams vectorize
with numpy and the compiled kernels produce the same bits as Python.
Uniform doubles use the top 53 bits: ``(z >> 11) * 2**-53``.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_SALT = 0x632BE59BD9B4E019
_TWO_M53 = 2.0 ** -53
_TWO_M52 = 2.0 ** -52

# stream purposes, used as the first path element of a key
SPLIT_STREAM = 1
BOOTSTRAP_STREAM = 2
TREE_STREAM = 3
SYNTH_STREAM = 4


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, *path: int) -> int:
    """Derive a stream key from a user seed and a path of small integers."""
    key = mix64(int(seed) & MASK64)
    for p in path:
        key = mix64(key ^ ((int(p) * GOLDEN + _SALT) & MASK64))
    return key


def raw(key: int, start: int, count: int) -> np.ndarray:
    """Outputs ``start .. start+count-1`` of stream ``key`` as uint64."""
    k = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + k * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def uniform(key: int, start: int, count: int) -> np.ndarray:
    """Doubles in [0, 1)."""
    return (raw(key, start, count) >> np.uint64(11)).astype(np.float64) * _TWO_M53


def bounded(key: int, start: int, count: int, n: int) -> np.ndarray:
    """Integers in [0, n) as ``floor(u * n)``, clamped to n - 1."""
    idx = (uniform(key, start, count) * n).astype(np.int64)
    return np.minimum(idx, n - 1)


class Stream:
    """Scalar cursor over a stream, used by the pure-Python kernels."""

    __slots__ = ("key", "counter")

    def __init__(self, key: int, counter: int = 0):
        self.key = key & MASK64
        self.counter = counter

    def next_raw(self) -> int:
        self.counter += 1
        return mix64(self.key + self.counter * GOLDEN)

    def next_uniform(self) -> float:
        return (self.next_raw() >> 11) * _TWO_M53

    def next_open_uniform(self) -> float:
        """Double in the open interval (0, 1); exact since the top 52 bits + 0.5 fit."""
        return ((self.next_raw() >> 12) + 0.5) * _TWO_M52

    def next_bounded(self, n: int) -> int:
        i = int(self.next_uniform() * n)
        return i if i < n else n - 1
