"""Deterministic RNG derivation.

Every random draw in the library traces back to one root seed through
``(root_seed, purpose_label, *indices)``.  The label is hashed with SHA-256
and folded into a ``numpy.random.SeedSequence`` together with the root seed
and the indices, so independent purposes get independent streams and
identical inputs always reproduce identical streams.
"""
import hashlib

import numpy as np


def _label_words(label: str):
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 8, 4)]


def seed_sequence(root_seed: int, label: str, *indices: int) -> np.random.SeedSequence:
    if any(int(i) < 0 for i in indices):
        raise ValueError("seed indices must be non-negative")
    entropy = [int(root_seed) & 0xFFFFFFFFFFFFFFFF, *_label_words(label)]
    entropy.extend(int(i) for i in indices)
    return np.random.SeedSequence(entropy)


def rng_for(root_seed: int, label: str, *indices: int) -> np.random.Generator:
    """Generator dedicated to one purpose, derived from the root seed."""
    return np.random.default_rng(seed_sequence(root_seed, label, *indices))


def derive_int_seed(root_seed: int, label: str, *indices: int) -> int:
    """A plain integer seed (e.g. for storing inside a hyperparameter set)."""
    return int(seed_sequence(root_seed, label, *indices).generate_state(1)[0])
