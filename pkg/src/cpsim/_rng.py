"""Named, reproducible random sub-streams derived from a single seed."""

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _word(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    part = int(part)
    if part < 0:
        raise ValueError(f"stream key must be non-negative, got {part}")
    return part


def seed_sequence(seed, *keys):
    return np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(_word(k) for k in keys))


def derive_seed(seed, *keys):
    """Return a 64-bit integer seed for the sub-stream ``keys`` of ``seed``.

    Keys may be strings (hashed with CRC32) or non-negative integers, e.g.
    ``derive_seed(7, "sensor", node_id, frame_index)``.
    """
    return int(seed_sequence(seed, *keys).generate_state(1, np.uint64)[0])


def rng_for(seed, *keys):
    return np.random.default_rng(seed_sequence(seed, *keys))
