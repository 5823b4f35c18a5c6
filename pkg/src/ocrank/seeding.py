"""Deterministic random streams derived from a single run seed.

Every randomized component (synthetic data, factor initialization, epoch
shuffling, negative sampling, ensemble training) pulls from its own named
stream.  Changing how one component consumes randomness therefore never
perturbs any other, and a whole run is reproducible from one integer.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_entropy(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def stream_seed(seed: int, *labels: str) -> np.random.SeedSequence:
    """Seed material for the stream named by ``labels`` under ``seed``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    if not labels:
        raise ValueError("at least one stream label is required")
    return np.random.SeedSequence((seed, *(_label_entropy(lab) for lab in labels)))


def stream_rng(seed: int, *labels: str) -> np.random.Generator:
    """A fresh generator for the named stream, e.g. ``stream_rng(7, "init")``."""
    return np.random.default_rng(stream_seed(seed, *labels))
