"""Deterministic seed derivation.

All randomness in the project flows through numpy's PCG64 generator.
Child seeds are derived from a master seed plus an integer path, so
replicates can run in any order (or in parallel) and still reproduce
the exact sequential results.
"""

from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "pcg64"


def derive_seed(master: int, *path: int) -> int:
    """Return a 64-bit seed derived from ``master`` and an index path."""
    ss = np.random.SeedSequence([int(master), *(int(p) for p in path)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_from(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed))
