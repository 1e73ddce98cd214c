"""Seed derivation and count rounding shared by every randomized step.

All randomness in the package flows from a single 64-bit master seed.
Child seeds are derived with :class:`numpy.random.SeedSequence`, using the
parent seed as entropy and a tuple of small integers as the spawn key, so a
child seed is a pure function of ``(parent, *key)`` and never depends on the
order in which other children were drawn.

Derivation scheme used by the experiment pipeline::

    split seed        = derive_seed(master, SPLIT)
    repetition seed r = derive_seed(master, REPETITION, r)
    poison seed       = derive_seed(repetition seed, POISON)
    forest seed       = derive_seed(repetition seed, FOREST)
    forest i seed     = derive_seed(forest seed, i)          (ensemble member)
    tree t seed       = derive_seed(forest i seed, t)
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

MASK64 = (1 << 64) - 1

# stream tags for derive_seed keys
SPLIT = 1
REPETITION = 2
POISON = 3
FOREST = 4
BALANCE = 5
SELECT = 6
VALUES = 7


def derive_seed(parent: int, *key: int) -> int:
    """Return a 64-bit child seed of ``parent`` for the integer path ``key``."""
    seq = np.random.SeedSequence(entropy=int(parent) & MASK64, spawn_key=tuple(int(k) for k in key))
    lo, hi = seq.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


def rng_for(parent: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(parent, *key))


def _exact(x) -> Fraction:
    # str() keeps 0.1 as 1/10 instead of its binary expansion
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(str(x))


def round_half_up(x) -> int:
    """Round a non-negative quantity to the nearest integer, halves upward."""
    return math.floor(_exact(x) + Fraction(1, 2))


def percent_count(percent, size: int) -> int:
    """``round_half_up(percent / 100 * size)`` computed in exact arithmetic."""
    return round_half_up(_exact(percent) * size / 100)


def floor_fraction(fraction, size: int) -> int:
    return math.floor(_exact(fraction) * size)
