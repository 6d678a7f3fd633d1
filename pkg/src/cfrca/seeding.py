"""Deterministic seed derivation.

Instance seeds are derived with the SplitMix64 finalizer so that any
implementation can reproduce them:

    z = (x + 0x9E3779B97F4A7C15) mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    z = z ^ (z >> 31)

``mix(seed, k) = splitmix64(splitmix64(seed) ^ k)``.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MUL1 = 0xBF58476D1CE4E5B9
MUL2 = 0x94D049BB133111EB


def splitmix64(x: int) -> int:
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MUL2) & MASK64
    return z ^ (z >> 31)


def mix(seed: int, k: int) -> int:
    return splitmix64(splitmix64(seed & MASK64) ^ (k & MASK64))


def rng_for(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng(mix(seed, k))
