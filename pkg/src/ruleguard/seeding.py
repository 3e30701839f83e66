"""Seed-stream derivation.

Every random draw in the package descends from one integer master seed.
A stream is identified by the master seed plus a path of keys (strings or
integers); the same path always yields the same generator, and distinct
paths yield statistically independent generators (via ``SeedSequence``).
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"stream keys must be non-negative, got {key}")
        return int(key)
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"unsupported stream key {key!r}")


def derive_seed(seed: int, *keys) -> int:
    """Return a 63-bit integer seed for the stream ``(seed, *keys)``."""
    entropy = [_key_to_int(seed)] + [_key_to_int(k) for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Generator for the stream ``(seed, *keys)``."""
    entropy = [_key_to_int(seed)] + [_key_to_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def episode_seeds(seed: int, n: int, *keys) -> list[int]:
    """Per-episode seeds; episode ``i`` depends only on ``(seed, keys, i)``."""
    return [derive_seed(seed, *keys, i) for i in range(n)]
