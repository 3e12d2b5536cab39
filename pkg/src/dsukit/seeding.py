"""Deterministic seed derivation.

Every random choice in the pipeline draws from a generator derived from a
root seed plus a tuple of string/int tags naming the decision point. This
makes results independent of dict ordering or input file order and keeps
reruns bit-identical. PCG64 streams are stable across platforms and numpy
releases, so derived draws are reproducible everywhere.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _encode(part: int | str) -> int:
    if isinstance(part, bool):  # bool is an int subclass; be explicit
        return int(part)
    if isinstance(part, int):
        return part & _MASK64
    digest = hashlib.blake2b(part.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed_sequence(seed: int, *tags: int | str) -> np.random.SeedSequence:
    """Build a SeedSequence from a root seed and a tag path."""
    entropy = [seed & _MASK64] + [_encode(t) for t in tags]
    return np.random.SeedSequence(entropy)


def rng_for(seed: int, *tags: int | str) -> np.random.Generator:
    """Deterministic generator for the decision point named by ``tags``."""
    return np.random.Generator(np.random.PCG64(derive_seed_sequence(seed, *tags)))


def derive_seed(seed: int, *tags: int | str) -> int:
    """A plain integer seed for the decision point named by ``tags``."""
    return int(derive_seed_sequence(seed, *tags).generate_state(1, np.uint64)[0])
