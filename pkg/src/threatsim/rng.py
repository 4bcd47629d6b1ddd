"""Named random streams derived from one master seed."""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, name: str, *sub: int) -> np.random.Generator:
    """Independent generator for ``(seed, name, *sub)``.

    The same triple always yields the same stream, whatever else was drawn.
    """
    if seed is None:
        raise ValueError("a seed is required for stochastic paths")
    key = (zlib.crc32(name.encode("utf-8")),) + tuple(int(s) for s in sub)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))
