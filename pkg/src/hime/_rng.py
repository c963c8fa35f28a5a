"""Counter-based sampling helpers.

Draws are produced in fixed-size blocks, each from its own Philox stream keyed
by ``(seed, block)``. Sample ``i`` therefore depends only on ``(seed, i)``,
not on how many samples were requested or how blocks are scheduled.
"""
from __future__ import annotations

import numpy as np

BLOCK = 1024


def block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(block)])))


def blocked_draws(seed: int, count: int, draw, width: int):
    """Stack ``draw(rng, BLOCK)`` over blocks and keep the first ``count`` rows.

    ``draw`` must return an array of shape ``(BLOCK, width)``.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    nblocks = -(-count // BLOCK)
    if nblocks == 0:
        return None
    parts = [draw(block_generator(seed, b), BLOCK) for b in range(nblocks)]
    return np.concatenate(parts, axis=0)[:count]
