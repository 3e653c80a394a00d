"""Seed handling shared by every sampler.

All randomness flows through ``numpy.random.Generator``. A master seed is
split into independent substreams with ``SeedSequence(seed, spawn_key=keys)``,
so the stream for a replicate block depends only on ``(seed, keys)`` and never
on scheduling order.
"""

from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("seed is required (no wall-clock default)")
    return np.random.default_rng(seed)


def split(seed: int, *keys: int) -> np.random.Generator:
    """Generator for substream ``keys`` of master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a 63-bit integer seed from ``rng`` for a nested sampler."""
    return int(rng.integers(0, 2**63 - 1))
