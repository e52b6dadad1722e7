"""Deterministic random-stream derivation.

All randomness in a run flows from one master seed; components draw from
named substreams so they stay reproducible independently of each other.
"""

import zlib

import numpy as np


def substream(seed, name):
    """Generator for the named substream of a master seed."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        entropy=int(seed), spawn_key=(key,))))


def substream_seed(seed, name):
    """Stable integer sub-seed (for storing in model files)."""
    return int(substream(seed, name).integers(0, 2 ** 31 - 1))
