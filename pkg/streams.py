"""Named random streams derived from a single seed"""

import zlib

import numpy as np

# stream names used across the package
INIT = "init-r"
MASK = "mask"
PAIRING = "pairing"
GENERATION = "generation"


def stream_key(name: str) -> int:
    """Stable 32-bit key for a stream name."""
    return zlib.crc32(name.encode("utf-8"))


def rng_stream(seed: int, name: str, *index: int) -> np.random.Generator:
    """
    Build an independent generator for (seed, name, index...).

    Component seeds only depend on the stream name and index, so adding a new
    stream never shifts the draws of the existing ones.
    """
    spawn_key = (stream_key(name),) + tuple(int(i) for i in index)
    sequence = np.random.SeedSequence(
        entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=spawn_key
    )
    return np.random.default_rng(sequence)
