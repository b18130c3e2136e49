"""Seeded randomness with named substreams.

Every random draw in the package flows from a counter-based Philox
generator keyed by ``(seed, substream-name)``.  Independent pipelines
(world generation, parameter init, sampling, perception) therefore
consume non-overlapping streams and stay reproducible regardless of
call order elsewhere in the program.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(seed: int, name: str = "") -> int:
    """128-bit Philox key derived from a seed and a substream name."""
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


def generator(seed: int, name: str = "") -> np.random.Generator:
    """A fresh counter-based generator for the given seed/substream."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, name)))


def child_seed(seed: int, name: str) -> int:
    """Derive a plain integer seed for an op that takes one explicitly."""
    return stream_key(seed, name) % (2**63)


class RngHub:
    """Root seed plus named-substream bookkeeping for one engine.

    Substream names in use: ``init`` (parameter initialization),
    ``world`` (signature generation), ``perception`` (pipeline
    sampling), ``sampling`` (ad-hoc draws).
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def stream(self, name: str) -> np.random.Generator:
        return generator(self.seed, name)

    def call_seed(self, name: str, counter: int) -> int:
        """Stable per-call seed, e.g. one per perception event."""
        return child_seed(self.seed, f"{name}:{counter}")
