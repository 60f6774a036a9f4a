"""Seed handling: every random stream is a PCG64 generator keyed by an int seed.

A master seed fans out into named, independent streams so that changing
one experiment knob does not perturb the randomness of unrelated steps.
"""

import zlib

import numpy as np


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(master: int, *keys) -> int:
    """Deterministic 63-bit seed for the stream named by ``keys``.

    String keys are mapped through CRC32, integers are used as-is.
    """
    spawn_key = tuple(zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in keys)
    state = np.random.SeedSequence(int(master), spawn_key=spawn_key).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))
