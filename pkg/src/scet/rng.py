"""Random-stream derivation.

Every consumer of randomness receives its own stream derived from
``(master_seed, label)``.  The label is hashed with BLAKE2b (8 bytes,
little-endian) and used as the spawn key of a :class:`numpy.random.SeedSequence`
whose entropy is the master seed; streams are Philox (counter-based)
generators.  Nothing in the package touches global random state.
"""

from __future__ import annotations

import hashlib

import numpy as np

UINT64_MASK = (1 << 64) - 1


def label_key(label: str) -> int:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def seed_sequence(master_seed: int, label: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master_seed) & UINT64_MASK,
                                  spawn_key=(label_key(label),))


def derive_seed(master_seed: int, label: str) -> int:
    """64-bit child seed for ``label`` under ``master_seed``."""
    state = seed_sequence(master_seed, label).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def stream(master_seed: int, label: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_sequence(master_seed, label)))
