from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass(frozen=True)
class ExponentEstimate:
    """An exponent in inverse time units with its standard error.

    ``stderr`` is the batch-means error across independent seeds, or across
    ten equal time blocks of the single path when only one seed was run.
    """

    value: float
    stderr: float
    T: float
    dt: float
    n_seeds: int
    fingerprint: str = ""
    samples: tuple = field(default=(), compare=False)
    excluded: int = 0

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("exponent estimate is not finite")
        if not self.stderr >= 0:
            raise ValueError("stderr must be non-negative")

    def to_dict(self):
        d = asdict(self)
        d["samples"] = list(self.samples)
        return d


def batch_estimate(per_seed, blocks, T, dt, fingerprint, excluded=0):
    """Combine per-seed values (and per-block values of the single-seed case)."""
    per_seed = np.asarray(per_seed, dtype=float)
    k = per_seed.size
    if k == 0:
        raise ValueError("no successful runs to combine")
    value = float(per_seed.mean())
    if k > 1:
        stderr = float(per_seed.std(ddof=1) / math.sqrt(k))
    else:
        b = np.asarray(blocks, dtype=float)
        stderr = float(b.std(ddof=1) / math.sqrt(b.size)) if b.size > 1 else 0.0
    return ExponentEstimate(value, stderr, T, dt, k, fingerprint, tuple(per_seed.tolist()), excluded)
