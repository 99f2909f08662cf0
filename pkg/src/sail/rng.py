"""Deterministic random streams.

Every stochastic component draws from its own counter-based stream keyed by
(seed, purpose tag, epoch). Streams are independent of call order and thread
scheduling, which is what makes checkpoint-resume bitwise-reproducible.
"""

import hashlib

import numpy as np


def stream(seed: int, tag: str, epoch: int = 0) -> np.random.Generator:
    """Return an independent generator for the given (seed, tag, epoch) key."""
    digest = hashlib.sha256(f"{seed}/{tag}/{epoch}".encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))
