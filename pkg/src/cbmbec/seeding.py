"""Deterministic seed derivation.

Every random draw in the package flows from a single 64-bit master seed.  A
trial is addressed by a tuple of non-negative integers (a stream tag plus
indices); its generator is seeded with ``SeedSequence([master, *key])``, so
results never depend on the order or the process in which trials run.
"""

from __future__ import annotations

import numpy as np

# stream tags, kept stable so that stored manifests stay reproducible
TAG_INSTANCE = 1
TAG_TS = 2
TAG_PATH = 3
TAG_LHS = 4
TAG_REMAINDER = 5
TAG_CONCENTRATION = 6
TAG_ORACLE = 7
TAG_REPLICA = 8
TAG_DERIVATIVE = 9


def trial_seed(master: int, *key: int) -> np.random.SeedSequence:
    entropy = [int(master) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in key)]
    return np.random.SeedSequence(entropy)


def trial_rng(master: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(trial_seed(master, *key))


def as_rng(rng) -> np.random.Generator:
    """Accept a Generator, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
