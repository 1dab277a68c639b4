"""Reproducible counter-based random streams.

Every stochastic routine in the package draws from a stream keyed by
(seed, *stream ids).  Streams are backed by numpy's Philox generator,
which is counter-based, so the same key always reproduces the same
values regardless of how many other streams were consumed in between.
"""

from __future__ import annotations

import zlib

import numpy as np


def _as_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf8"))


def stream(seed: int, *key) -> np.random.Generator:
    """Return a Generator deterministically keyed by (seed, *key).

    Key parts may be ints or strings; strings are hashed with crc32.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_as_int(k) for k in key]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
