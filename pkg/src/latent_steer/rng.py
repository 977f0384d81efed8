"""Named random streams derived from one 64-bit run seed."""
from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("data", "views", "negatives", "init", "metrics", "dgm", "eval")


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name``; stable across processes and versions."""
    if name not in STREAMS:
        raise ValueError(f"unknown random stream {name!r}")
    key = zlib.crc32(name.encode("ascii"))
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, key]))
