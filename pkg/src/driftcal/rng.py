"""Deterministic random streams.

Every stochastic component draws from a counter-based generator keyed by
(seed, substream...) so that runs are bitwise reproducible and independent
substreams never share state.
"""

from __future__ import annotations

import numpy as np

# substream tags
SUB_STREAM = 1
SUB_LEARNER = 2
SUB_BERNOULLI = 3
SUB_SIM = 4


def make_rng(seed: int, *substream: int) -> np.random.Generator:
    ss = np.random.SeedSequence((int(seed),) + tuple(int(s) for s in substream))
    return np.random.Generator(np.random.Philox(ss))
