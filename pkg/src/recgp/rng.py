"""Seed derivation for independent, reproducible random sub-streams.

Every random draw in the package comes from a PCG64 generator seeded by a
``SeedSequence`` whose spawn key names the purpose of the draw. Changing the
number of draws in one stream therefore never perturbs another.
"""

import numpy as np

ANTENNAS = 0
TRAIN_USERS = 1
TEST_USERS = 2
FADING = 3
SHADOWING = 4
RESTARTS = 5
PCA_USERS = 6

_MASK64 = (1 << 64) - 1


def derive_seed(master, *keys):
    """Return a 64-bit integer seed derived from ``master`` and a key path."""
    ss = np.random.SeedSequence(int(master) & _MASK64, spawn_key=tuple(int(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def generator(seed):
    """PCG64 generator for an integer seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK64))
