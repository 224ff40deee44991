"""Seed derivation and digest helpers used across the package."""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np


def derive_seed(root_seed: int, label: str) -> int:
    """Map (root seed, label) to a stable 63-bit stream seed.

    Distinct labels give independent streams without any coordination
    between call sites; the same inputs always give the same seed.
    """
    digest = hashlib.sha256(f"{root_seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & 0x7FFFFFFFFFFFFFFF


def rng_for(root_seed: int, label: str) -> np.random.Generator:
    """Seeded generator for one named stream."""
    return np.random.default_rng(derive_seed(root_seed, label))


def digest_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def digest_ids(ids: list[str]) -> str:
    """Order-sensitive digest of a list of example ids."""
    h = hashlib.sha256()
    for ex_id in ids:
        h.update(ex_id.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()
