"""Seed handling.

Every randomized routine takes a ``seed`` argument and derives its
generator through here, so that a run is reproducible from the seed
alone.  Replicated procedures derive one child stream per replicate
index with :func:`substream`; results then do not depend on how the
replicates are scheduled across workers.
"""

from __future__ import annotations

import numpy as np


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return seed.bit_generator.seed_seq
    return np.random.SeedSequence(seed)


def as_generator(seed) -> np.random.Generator:
    """Accept an int, a SeedSequence, or a ready Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(as_seed_sequence(seed))


def substream(seed, index: int) -> np.random.SeedSequence:
    """Child seed for replicate ``index``, independent across indices.

    Appends to the seed's spawn chain, so substreams nest without
    collisions: (seed, i, j) differs from (seed, i', j) for i != i'.
    """
    root = as_seed_sequence(seed)
    return np.random.SeedSequence(
        entropy=root.entropy, spawn_key=tuple(root.spawn_key) + (int(index),)
    )


def digest(seed, count: int) -> str:
    """Short stable fingerprint of the streams substream(seed, 0..count-1)."""
    root = as_seed_sequence(seed)
    mask = (1 << 64) - 1
    h = 1469598103934665603  # FNV-1a over the first state word of each stream
    for i in range(count):
        h = ((h ^ int(substream(root, i).generate_state(1)[0])) * 1099511628211) & mask
    return f"{h:016x}"
