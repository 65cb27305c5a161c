"""Deterministic random streams.

Every stochastic operation takes an explicit generator. Streams are derived
from (seed, stream id, ...) through a counter-based bit generator, so a run
is bit-reproducible given its seed and no stream ever aliases another.
"""

import numpy as np

# Fixed stream ids, one per purpose. Never reuse a retired value.
INIT = 1
DROPOUT = 2
SPLIT = 3
NEGATIVES = 4
GENERATOR = 5


def make_rng(seed, *stream):
    """Generator for the given seed and stream path (non-negative ints)."""
    path = [int(seed)] + [int(s) for s in stream]
    if any(s < 0 for s in path):
        raise ValueError("seed and stream ids must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(path)))
