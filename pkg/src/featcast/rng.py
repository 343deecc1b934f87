"""Seed handling: every source of randomness is a named sub-stream of one seed."""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a generator for the sub-stream `name` derived from `seed`.

    The same (seed, name) pair always yields an identical stream, and distinct
    names yield independent streams, so pipeline stages can be re-run in
    isolation without disturbing each other.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), key])))
