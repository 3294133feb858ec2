"""Deterministic random-number streams for parallel bootstrap and Monte Carlo work.

Every stochastic task derives its generator from a master seed plus an integer
key path, so replicate outcomes depend only on (master seed, key) and never on
scheduling order or worker count.
"""

import numpy as np

# Key-path ids for the bootstrap schemes; stable across releases so that runs
# with the same master seed reproduce bit-for-bit.
SCHEME_GRID = 1
SCHEME_RESIDUAL = 2
SCHEME_CONTINUITY = 3
SCHEME_LINEARITY = 4
SCHEME_NONPARAMETRIC = 5
STREAM_MC = 100
STREAM_LIMIT_SIM = 101


def substream(master_seed, *key):
    """Return a Generator for the stream identified by ``(master_seed, *key)``.

    Uses a counter-based seed sequence: identical keys always produce the same
    stream; distinct keys produce statistically independent streams.
    """
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def resample_indices(n, rng):
    """Draw n i.i.d. uniform indices on {0, ..., n-1}."""
    return rng.integers(0, n, size=n)


def child_seed(master_seed, *key):
    """Derive an integer seed for a nested run (e.g. one Monte Carlo replicate)."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, dtype=np.uint64)[0])
