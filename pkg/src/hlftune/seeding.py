"""Seeded random streams.

Every random draw in a trial comes from a PCG64 generator whose state is
derived, through numpy's ``SeedSequence``, from the trial seed plus a
stream key such as ``(STREAM_PROPOSE, iteration)``.  Keying streams by
iteration (rather than advancing one shared generator) is what lets a
logged trial prefix be replayed and continued bit-for-bit.
"""

import zlib

import numpy as np

STREAM_DESIGN = 1
STREAM_PROPOSE = 2
STREAM_NOISE = 3
STREAM_REFERENCE = 4
STREAM_SURROGATE = 5
STREAM_EMBEDDING = 6
STREAM_EXECUTOR = 7


def rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, stream)])))


def name_seed(name: str) -> int:
    """Stable 32-bit integer derived from a string (method names)."""
    return zlib.crc32(name.encode())
