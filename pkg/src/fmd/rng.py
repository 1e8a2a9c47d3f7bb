"""Deterministic randomness built on SplitMix64.

Every random draw in this package flows through this module so that a run
is a pure function of its seeds, byte-for-byte, and so that an independent
implementation can reproduce the same streams from the written rules:

* State advances by the 64-bit golden-ratio increment 0x9E3779B97F4A7C15;
  each output is the standard two-round SplitMix64 finalizer of the new
  state.
* Floats take the top 53 bits of an output, uniform on [0, 1).
* Gaussians come from Box-Muller: each pair consumes two uniforms u1, u2
  in that order and yields (r*cos(2*pi*u2), r*sin(2*pi*u2)) with
  r = sqrt(-2*ln(1 - u1)).  For an odd request the second value of the
  final pair is discarded; nothing is cached across calls.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _finalize(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    """FNV-1a hash of a UTF-8 string; stable across runs and platforms."""
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & MASK64
    return h


def derive_seed(seed: int, *path: int | str) -> int:
    """Derive a decorrelated child seed from a root seed and a path.

    Path components may be ints or short string tags (hashed with FNV-1a).
    Used to give every pipeline stage its own stream while keeping the
    whole run a function of one root seed.
    """
    state = seed & MASK64
    for part in path:
        c = fnv1a64(part) if isinstance(part, str) else (part & MASK64)
        state = _finalize((state + GOLDEN * (c + 1)) & MASK64)
    return state


class SplitMix64:
    """SplitMix64 stream generator.

    The vectorized block methods are bit-equal to the equivalent sequence
    of scalar calls; they exist only to keep bulk draws (dataset noise)
    fast.
    """

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return _finalize(self.state)

    def next_u64_block(self, n: int) -> np.ndarray:
        if n <= 0:
            return np.empty(0, dtype=np.uint64)
        idx = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(self.state) + np.uint64(GOLDEN) * idx  # wraps mod 2^64
        self.state = int(z[-1])
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def next_float(self) -> float:
        """Uniform on [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def floats(self, n: int) -> np.ndarray:
        return (self.next_u64_block(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_float()

    def below(self, n: int) -> int:
        """Integer in [0, n); floor of a uniform float scaled by n."""
        return int(self.next_float() * n)

    def normals(self, n: int) -> np.ndarray:
        """n standard Gaussians via Box-Muller, pair order as documented."""
        if n <= 0:
            return np.empty(0, dtype=np.float64)
        pairs = (n + 1) // 2
        u = self.floats(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, descending index."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> np.ndarray:
        idx = list(range(n))
        self.shuffle(idx)
        return np.asarray(idx, dtype=np.int64)
