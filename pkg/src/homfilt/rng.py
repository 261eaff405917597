"""Deterministic random stream derivation.

Every stochastic component receives its own numpy ``Generator`` derived from a
root seed plus a structured key, so no stream is ever shared or reused across
roles, replications or grid nodes.
"""

import numpy as np

# Role indices used when deriving per-replication streams.
ROLE_TRUTH = 0
ROLE_OBS = 1
ROLE_FULL_FILTER = 2
ROLE_HOMOG_FILTER = 3


def stream(root_seed: int, *key: int) -> np.random.Generator:
    """Derive an independent generator from ``root_seed`` and an integer key path."""
    ss = np.random.SeedSequence(entropy=root_seed, spawn_key=tuple(key))
    return np.random.default_rng(ss)
