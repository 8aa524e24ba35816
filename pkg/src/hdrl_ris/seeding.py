"""Per-entity random streams derived from one master seed.

``derive_rng(seed, name)`` seeds a ``SeedSequence`` with the master seed as
entropy and ``crc32(name)`` as the spawn key, so each named entity gets an
independent stream that does not depend on which other entities exist.
"""
from __future__ import annotations

import zlib

import numpy as np


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def derive_seed_sequence(seed: int, name: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(stream_key(name),))


def derive_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed_sequence(seed, name))
