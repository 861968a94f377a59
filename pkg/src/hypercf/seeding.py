"""Derivation of independent random streams from one master seed.

Every stream is ``PCG64(SeedSequence(seed, spawn_key=(stream_id, *extra)))``.
Stream ids are fixed below and must never be renumbered; ``extra`` selects a
sub-stream (table index for ``init``, epoch index for ``sampling``).
"""
from __future__ import annotations

import numpy as np

STREAMS = {
    "init": 0,
    "split": 1,
    "eval_negatives": 2,
    "sampling": 3,
}

# sub-stream keys under "init"
INIT_USERS = 0
INIT_ITEMS = 1
INIT_LAYER = 2
INIT_HEAD = 3


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    key = (STREAMS[name], *(int(e) for e in extra))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))
