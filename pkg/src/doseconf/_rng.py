"""Named random streams derived from a single experiment seed."""

import zlib

import numpy as np


def substream(seed, name):
    """Return a Generator for the named sub-stream of ``seed``.

    Distinct names give statistically independent streams, and the mapping
    (seed, name) -> stream is stable across runs and platforms.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(key,)))


def spawn_seeds(master_seed, n):
    """Return ``n`` well-separated integer seeds derived from a master seed."""
    state = np.random.SeedSequence(int(master_seed)).generate_state(n, dtype=np.uint32)
    return [int(s) for s in state]
