"""Root-seed derivation: every random stream is ``(root, crc32(tag), index)``."""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["derive_seed", "derive_rng", "child_rng"]


def derive_seed(root: int, tag: str, index: int = 0) -> np.random.SeedSequence:
    if root < 0 or index < 0:
        raise ValueError("seeds and indices must be nonnegative")
    return np.random.SeedSequence([int(root), zlib.crc32(tag.encode()), int(index)])


def derive_rng(root: int, tag: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, tag, index))


def child_rng(seed, index: int) -> np.random.Generator:
    """Generator for stream ``index`` below ``seed`` (an int or a SeedSequence)."""
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (index,))
    else:
        ss = np.random.SeedSequence(seed, spawn_key=(index,))
    return np.random.default_rng(ss)
