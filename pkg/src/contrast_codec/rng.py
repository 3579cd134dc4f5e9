"""Deterministic random primitives behind every reproducible artifact.

All randomness that shapes an on-disk file (within-class codebook shuffles,
unary bit placement, per-pixel channel layout) is drawn from the generator
defined here, so identical seeds give bit-identical output on any platform
and in any implementation of the documented equations (see docs/format.md,
"PRNG v1").  The core is xoshiro256** seeded through SplitMix64; stream keys
are folded from integer tuples such as (seed, bit_depth, class_index).

Analysis-only randomness (bit-flip noise trials) does not pass through this
module; it uses numpy's seeded generators.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_MUL_1 = 0xBF58476D1CE4E5B9
_MIX_MUL_2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 finalizer: avalanche one 64-bit value."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX_MUL_1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_MUL_2) & _MASK64
    return z ^ (z >> 31)


def fold64(*parts: int) -> int:
    """Fold a tuple of integers into a single 64-bit stream key."""
    h = _GOLDEN
    for part in parts:
        h = mix64(((h ^ (part & _MASK64)) + _GOLDEN) & _MASK64)
    return h


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """xoshiro256** with the state expanded from a 64-bit key via SplitMix64."""

    def __init__(self, key: int):
        s = key & _MASK64
        state = []
        for _ in range(4):
            s = (s + _GOLDEN) & _MASK64
            state.append(mix64(s))
        if not any(state):
            # all-zero state is a fixed point of the update; never reachable
            # from mix64 outputs in practice, pinned anyway for the format
            state[0] = _GOLDEN
        self._state = state

    def next64(self) -> int:
        s0, s1, s2, s3 = self._state
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._state = [s0, s1, s2, s3]
        return result

    def below(self, bound: int) -> int:
        """Uniform draw in [0, bound), bias-free via rejection."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = ((1 << 64) // bound) * bound
        while True:
            u = self.next64()
            if u < limit:
                return u % bound

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle, walking indices high to low."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


def stream(*parts: int) -> Xoshiro256StarStar:
    """Generator for the stream keyed by the given integer tuple."""
    return Xoshiro256StarStar(fold64(*parts))


# Vectorized mirrors of the scalar equations, used where one value is needed
# per pixel (channel layout).  numpy uint64 arithmetic wraps mod 2**64, which
# is exactly the scalar masking behavior.

def _mix64_vec(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_MUL_1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_MUL_2)
    return z ^ (z >> np.uint64(31))


def fold64_vec(*parts) -> np.ndarray:
    """Vectorized fold64 over broadcastable arrays of uint64."""
    h = None
    golden = np.uint64(_GOLDEN)
    for part in parts:
        p = np.asarray(part, dtype=np.uint64)
        acc = golden if h is None else h
        h = _mix64_vec((acc ^ p) + golden)
    if h is None:
        raise ValueError("fold64 needs at least one part")
    return h


def first_output_vec(keys: np.ndarray) -> np.ndarray:
    """First xoshiro256** output for each stream key, vectorized.

    Only state word 1 feeds the first output, so the seeding chain can stop
    after two SplitMix64 steps.  Matches stream(*k).next64() exactly.
    """
    golden = np.uint64(_GOLDEN)
    s1 = _mix64_vec(np.asarray(keys, dtype=np.uint64) + golden + golden)
    return _rotl_vec(s1 * np.uint64(5), 7) * np.uint64(9)


def _rotl_vec(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))
