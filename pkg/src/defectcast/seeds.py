"""Deterministic seed fan-out.

A single master seed derives independent child streams keyed by a component
path (strings and integers).  Components can therefore run in any order, or
in parallel, without perturbing each other's randomness, and a rerun with the
same master seed reproduces every stream bit for bit.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key(part: str | int) -> int:
    if isinstance(part, int):
        return part & 0xFFFFFFFF
    digest = hashlib.sha256(part.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def seed_sequence(master: int, *path: str | int) -> np.random.SeedSequence:
    """Child seed sequence for a component identified by ``path``."""
    return np.random.SeedSequence([master & 0xFFFFFFFF, *(_key(p) for p in path)])


def rng_for(master: int, *path: str | int) -> np.random.Generator:
    """Fresh generator for a component identified by ``path``."""
    return np.random.default_rng(seed_sequence(master, *path))


def child_seed(master: int, *path: str | int) -> int:
    """A plain integer seed derived from the master seed and a path."""
    return int(seed_sequence(master, *path).generate_state(1)[0])
