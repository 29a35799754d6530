"""Deterministic named RNG sub-streams.

A single user-facing seed fans out into independent generators, one per
pipeline stage (world, init, batch, dropout, crops, ...), so changing how
one stage consumes randomness never perturbs another.
"""

import hashlib

import numpy as np


def child_seed(seed: int, name: str) -> int:
    """Derive a stable 63-bit seed for the sub-stream `name`."""
    digest = hashlib.sha256(f"{int(seed)}/{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def substream(seed: int, name: str) -> np.random.Generator:
    """A generator seeded from `seed` for the named sub-stream."""
    return np.random.default_rng(child_seed(seed, name))
