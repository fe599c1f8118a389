"""Deterministic seed derivation.

One master seed drives the whole pipeline; every stage (and every
independent stream within a stage) derives its own seed from the master
seed plus a label, so adding or reordering stages never shifts the
randomness of the others.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, label: str) -> int:
    """Derive a 64-bit seed from a master seed and a stream label."""
    digest = hashlib.sha256(f"{master}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; state is serializable for checkpointing."""
    return np.random.Generator(np.random.PCG64(seed))


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def restore_rng(state: dict) -> np.random.Generator:
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = state
    return rng
