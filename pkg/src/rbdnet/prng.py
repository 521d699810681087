"""Deterministic pseudo-random numbers for scenario generation.

The generator is pinned by algorithm (splitmix64-seeded xoshiro256++),
not by library, so the same seed yields the same scenario stream in any
conforming implementation. Reference: Blackman & Vigna, prng.di.unimi.it.
"""
from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One splitmix64 output for state ``x`` (advances the state first)."""
    x = (x + _GAMMA) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def scenario_seed(global_seed: int, scenario_index: int) -> int:
    """Per-scenario seed: splitmix64(global_seed XOR scenario_index)."""
    return splitmix64((global_seed ^ scenario_index) & MASK64)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256pp:
    """xoshiro256++ with its state filled from splitmix64(seed)."""

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, seed: int):
        state = seed & MASK64
        filled = []
        for _ in range(4):
            state = (state + _GAMMA) & MASK64
            z = state
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
            filled.append(z ^ (z >> 31))
        if not any(filled):  # all-zero state is the one forbidden seed
            filled[0] = 1
        self.s0, self.s1, self.s2, self.s3 = filled

    def next_u64(self) -> int:
        result = (_rotl((self.s0 + self.s3) & MASK64, 23) + self.s0) & MASK64
        t = (self.s1 << 17) & MASK64
        self.s2 ^= self.s0
        self.s3 ^= self.s1
        self.s1 ^= self.s2
        self.s0 ^= self.s3
        self.s2 ^= t
        self.s3 = _rotl(self.s3, 45)
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + self.random() * (hi - lo)

    def choice_index(self, n: int) -> int:
        """Uniform integer in [0, n). n is tiny here; float path is fine."""
        i = int(self.random() * n)
        return n - 1 if i >= n else i

    def unit_quaternion(self) -> tuple[float, float, float, float]:
        """Uniform random rotation (Shoemake's subgroup algorithm), (w,x,y,z)."""
        u1 = self.random()
        u2 = self.random()
        u3 = self.random()
        a = math.sqrt(1.0 - u1)
        b = math.sqrt(u1)
        x = a * math.sin(2.0 * math.pi * u2)
        y = a * math.cos(2.0 * math.pi * u2)
        z = b * math.sin(2.0 * math.pi * u3)
        w = b * math.cos(2.0 * math.pi * u3)
        return (w, x, y, z)
