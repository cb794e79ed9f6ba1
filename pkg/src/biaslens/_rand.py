"""Deterministic seeding helpers shared across the package.

Every source of randomness is a counter-based Philox stream whose key is a
splitmix64-style hash of integer parts (seed, restart index, epoch number,
...).  Streams keyed on different parts are independent, and the same parts
always reproduce the same stream, independent of call order or platform.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_MULT_A = 0xBF58476D1CE4E5B9
_MULT_B = 0x94D049BB133111EB


def _finalize(z: int) -> int:
    """splitmix64 finalizer: a strong 64-bit mixing permutation."""
    z = (z + _GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * _MULT_A) & MASK64
    z = ((z ^ (z >> 27)) * _MULT_B) & MASK64
    return (z ^ (z >> 31)) & MASK64


def mix64(*parts: int) -> int:
    """Hash a tuple of integers into a single 64-bit value.

    Negative parts are folded into unsigned 64-bit space first, so callers
    may pass ordinary Python ints of either sign.
    """
    h = 0
    for part in parts:
        h = _finalize(h ^ (int(part) & MASK64))
    if not parts:
        h = _finalize(0)
    return h


def philox(*key_parts: int) -> np.random.Generator:
    """Return a Generator over a Philox stream keyed by ``key_parts``.

    Distinct key tuples give statistically independent streams; identical
    tuples give bit-identical streams.
    """
    lo = mix64(*key_parts)
    hi = _finalize(lo)
    return np.random.Generator(np.random.Philox(key=(hi << 64) | lo))
