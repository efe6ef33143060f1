"""Deterministic seed splitting.

Every random stream is derived from one master seed plus a tuple of
labels.  String labels are hashed with CRC-32, integers are used as is,
so the derivation is stable across processes and Python versions.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("integer seed labels must be non-negative")
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def seed_sequence(master: int, *labels) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=tuple(_key(l) for l in labels))


def rng_for(master: int, *labels) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(master, *labels))


def int_seed(master: int, *labels) -> int:
    """A 63-bit integer seed, e.g. for naming cached noise realizations."""
    return int(seed_sequence(master, *labels).generate_state(2, np.uint32).view(np.uint64)[0] >> 1)
