"""Deterministic seed derivation for parallel Monte Carlo trials.

Per-trial seeds come from a splitmix64 mix of (base_seed, trial_index), so a
run split across any number of workers reproduces the serial run bit for bit.
"""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 scrambling round (Steele et al.)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return (x ^ (x >> 31)) & _MASK


def trial_seed(base_seed: int, trial_index: int) -> int:
    """64-bit seed for one trial; documented in the result schema."""
    return splitmix64((base_seed & _MASK) ^ splitmix64(trial_index & _MASK))


def trial_rng(base_seed: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(trial_seed(base_seed, trial_index))
