"""Deterministic seed splitting for replications."""

from __future__ import annotations

MASK64 = (1 << 64) - 1

# domain tags keep calibration and evaluation streams disjoint
EVALUATION = 0x45564C
CALIBRATION = 0x43414C


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *indices: int, domain: int = EVALUATION) -> int:
    """Child seed for (seed, indices...) in a hash domain.

    Each index is folded in with one splitmix64 round, so distinct index paths
    and distinct domains give unrelated 64-bit seeds.
    """
    h = splitmix64((seed & MASK64) ^ splitmix64(domain))
    for i in indices:
        h = splitmix64(h ^ (i & MASK64))
    return h
