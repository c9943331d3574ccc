"""Named random sub-streams derived from one master seed.

Each consumer (disturbance noise, weight init, batch shuffling, ...) gets its
own counter-based Philox stream keyed by (master seed, stream name), so adding
or removing one consumer never shifts the draws seen by another.
"""

import zlib

import numpy as np


def _key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(master_seed: int, name: str) -> np.random.Generator:
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(_key(name),))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(master_seed: int, name: str) -> int:
    """A 63-bit integer seed for the named stream (for configs and manifests)."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(_key(name),))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
