"""Keyed random substreams.

Every episode draws its randomness from a substream addressed by a key tuple
and a row index, so the draws of one episode never depend on how many other
episodes were simulated, discarded, or run on another worker. Rows are laid
out contiguously in a Philox counter stream; row ``k`` of a key can be
produced on its own or as part of a bulk block and the two agree bit for bit.
"""

from __future__ import annotations

import numpy as np

# Philox emits four 64-bit words per counter step.
_WORDS_PER_BLOCK = 4


def row_width(H: int) -> int:
    """Doubles reserved per episode: x_1 plus one transition per step, padded."""
    need = H + 1
    return -(-need // _WORDS_PER_BLOCK) * _WORDS_PER_BLOCK


def _philox(seed: int, key: tuple[int, ...]) -> np.random.Philox:
    state = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Philox(key=state.generate_state(2, np.uint64))


def episode_uniforms(seed: int, key: tuple[int, ...], start: int, count: int, H: int) -> np.ndarray:
    """Uniforms for rows ``start .. start+count-1`` of the substream ``(seed, key)``.

    Returns an array of shape ``(count, H + 1)``.
    """
    width = row_width(H)
    bg = _philox(seed, key)
    if start:
        bg.advance(start * width // _WORDS_PER_BLOCK)
    block = np.random.Generator(bg).random((count, width))
    return block[:, : H + 1]


def generator(seed: int, key: tuple[int, ...] = ()) -> np.random.Generator:
    """A plain generator for non-episodic draws (instance construction, bandits)."""
    return np.random.Generator(_philox(seed, key))


# Namespaces keep sequential runs, concurrent rounds and instance draws apart.
SEQUENTIAL = 0
CONCURRENT = 1
INSTANCE = 2
BANDIT = 3
LOWER_BOUND = 4
