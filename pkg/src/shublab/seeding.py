"""Counter-based splittable seeding.

Every parallel task derives its generator from (master seed, stable task
index) through numpy's SeedSequence spawn keys, so sampling is independent
of scheduling and thread count.
"""

from __future__ import annotations

import numpy as np


def spawn_rng(master_seed: int, *task_index: int) -> np.random.Generator:
    """Generator for one task, keyed by the master seed and a stable index."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(task_index))
    return np.random.default_rng(seq)
