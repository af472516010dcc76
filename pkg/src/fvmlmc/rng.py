"""Deterministic per-sample random streams.

Every random input is drawn from a generator keyed by
``(base_seed, namespace, level, sample_index, purpose)``. The key is hashed
by :class:`numpy.random.SeedSequence`, so streams are independent, can be
recreated in any order and by any worker, and the fine and coarse solves of
one sample see the same randomness.
"""

import numpy as np

# purposes
LAYERS = 0
PERMEABILITY = 1

# namespaces, one per kind of experiment so that runs do not share samples
MLMC = 0
MC = 1
CONVERGENCE = 2
CGV_COMPARE = 3
SOLVER_BENCH = 4
REFERENCE = 5


def stream(seed: int, namespace: int, level: int, index: int, purpose: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(namespace), int(level), int(index), int(purpose)))
    return np.random.Generator(np.random.PCG64(ss))


class SampleStreams:
    """The generators belonging to one sample."""

    def __init__(self, seed, namespace, level, index):
        self.key = (seed, namespace, level, index)
        self._cache = {}

    def __call__(self, purpose: int) -> np.random.Generator:
        if purpose not in self._cache:
            self._cache[purpose] = stream(*self.key, purpose)
        return self._cache[purpose]
