"""Seed plumbing shared by the samplers and harnesses."""

from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_seed(master: int, *indices: int) -> int:
    """Deterministic 63-bit seed for (master, indices...), independent of call order."""
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, *map(int, indices)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def split_seed(seed: int, n: int) -> list[int]:
    return [derive_seed(seed, 0x5EED, i) for i in range(n)]
