"""Named random streams derived from a single integer seed.

Every stage asks for its own generator by name, e.g. ``stream(seed, "step2",
"u1", attempt)``.  Streams are keyed by a stable hash of the names, so adding
a new stage never changes the draws seen by an existing one.
"""

import zlib

import numpy as np


def _key(name):
    if isinstance(name, (int, np.integer)):
        if name < 0:
            raise ValueError("stream indices must be nonnegative")
        return int(name)
    return zlib.crc32(str(name).encode("utf-8")) | (1 << 32)


def seed_sequence(seed, *names):
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(x) for x in names))


def stream(seed, *names):
    """Return a ``numpy.random.Generator`` for the named substream of ``seed``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *names)))


def as_generator(seed, *names):
    """Accept an int seed or an existing Generator (returned unchanged)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(seed, *names)
