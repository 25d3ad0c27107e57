"""Reproducible random substreams.

Every independent unit of work (a block of Monte Carlo trials, an RB
sequence, a bootstrap resample) draws from its own generator, derived from
the master seed and the unit's index.  Results therefore do not depend on
how units are scheduled across workers.
"""
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def substream(seed, *index):
    """Generator for work unit ``index`` under master ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.PCG64(ss))


def map_units(func, units, workers=1):
    """Ordered ``map`` over independent units, optionally on a thread pool."""
    units = list(units)
    if workers is None or workers <= 1 or len(units) <= 1:
        return [func(u) for u in units]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, units))
