"""Counter-based random streams.

Every replicate (and every named sub-experiment) gets its own Philox generator
derived from (master seed, stream index). Philox is counter-based: distinct keys
produce keystreams with no shared counter blocks, so replicate streams are
structurally disjoint without coordination.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_key(master_seed: int, *indices: int) -> int:
    """128-bit Philox key for a (seed, index...) path.

    The master seed occupies the high key word. Multiple indices are folded
    into the low word with a Feistel-ish mix so that (a, b) and (b, a) differ.
    """
    if not (0 <= master_seed <= _MASK64):
        raise ValueError("master seed must fit in 64 bits")
    low = 0
    for ix in indices:
        if ix < 0:
            raise ValueError("stream indices must be nonnegative")
        low = (low * 0x9E3779B97F4A7C15 + ix + 1) & _MASK64
    return (master_seed << 64) | low


def derive(master_seed: int, *indices: int) -> np.random.Generator:
    """Independent generator for the given stream path."""
    return np.random.Generator(np.random.Philox(key=stream_key(master_seed, *indices)))


def key_words(gen: np.random.Generator) -> tuple[int, int]:
    """(low, high) key words of a Philox-backed generator, for disjointness checks."""
    state = gen.bit_generator.state
    if state["bit_generator"] != "Philox":
        raise TypeError("expected a Philox-backed generator")
    lo, hi = (int(w) for w in state["state"]["key"])
    return lo, hi
