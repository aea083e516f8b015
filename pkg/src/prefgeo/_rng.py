"""Seed derivation so every random stream is a stable function of one master seed."""
import zlib

import numpy as np


def derive_rng(seed, label, index=0):
    """Return a generator keyed on ``(seed, label, index)``.

    The label is hashed with CRC32 so streams are stable across processes and
    Python versions (``hash()`` is salted per process).
    """
    key = zlib.crc32(label.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key, int(index)]))


def as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
