"""Deterministic, splittable random streams.

Every stochastic component draws from its own named stream, so adding draws
to one purpose (say dropout) can never perturb another (say batch shuffling).
A stream is a Philox counter-based generator keyed by hashing
``"{seed}|{purpose}"``; streams are therefore independent of creation order
and reproducible across platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Recorded in dataset/checkpoint provenance; the only generator family used.
GENERATOR_NAME = "philox-sha256"


def stream(seed: int, purpose: str) -> np.random.Generator:
    """Independent generator for the (seed, purpose) pair."""
    digest = hashlib.sha256(f"{seed}|{purpose}".encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def fisher_yates(items: list, rng: np.random.Generator) -> list:
    """Shuffle a copy of ``items`` with an explicit Fisher-Yates pass.

    Spelled out (rather than Generator.permutation) so the shuffle is pinned
    to this exact draw sequence: one integer in [0, i] per position i,
    descending.
    """
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        out[i], out[j] = out[j], out[i]
    return out
