"""Named random streams fanned out from one root seed.

Each consumer asks for a stream by name (``stream(seed, "init", "extractor")``).
The name is hashed into the seed sequence's spawn key, so adding a new
consumer never shifts the draws seen by existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:4], "little")


def stream(root_seed: int, *names: object) -> np.random.Generator:
    spawn_key = tuple(_key(str(n)) for n in names)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(root_seed), spawn_key=spawn_key)))


def derive_seed(root_seed: int, *names: object) -> int:
    """Integer child seed, for APIs that take a seed rather than a generator."""
    return int(stream(root_seed, *names).integers(0, 2**31 - 1))
