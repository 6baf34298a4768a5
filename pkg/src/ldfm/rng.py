"""Deterministic, splittable random streams.

Every randomized entry point takes an explicit integer seed; independent
chains get child streams spawned from one seed sequence so that runs are
reproducible for any chain count and chains stay statistically independent.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

Seed = int | Sequence[int]


def make_rng(seed: Seed) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed))


def chain_rngs(seed: Seed, count: int) -> list[np.random.Generator]:
    """One independent generator per chain, derived from a single seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(c) for c in children]
