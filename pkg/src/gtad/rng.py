"""Deterministic, splittable pseudo-random generation.

Every stochastic operation in the pipeline takes an explicit generator
handle. Generators are numpy PCG64 instances; independent streams are
derived with spawn() so parallel consumers never share state.
"""

from __future__ import annotations

import numpy as np


def make_generator(seed: int) -> np.random.Generator:
    """Create the root generator for a run."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def split(gen: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Derive n independent child generators from gen."""
    return gen.spawn(n)
