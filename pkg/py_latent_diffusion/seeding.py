# -*- coding: utf-8 -*-
"""Named, seedable random streams.

Every stream is a Philox counter-based generator keyed by a tuple of
non-negative integers, so ``make_rng(seed, 3)`` is the same stream on every
platform and every run. Gaussian draws use numpy's ziggurat transform
(``Generator.standard_normal``), uniforms use ``Generator.random``.

Trailing zero keys do not change the stream: ``make_rng(5, 0)`` equals
``make_rng(5)``. Callers use key tuples of one length per purpose.
"""
import numpy as np

__all__ = ['make_rng', 'derive_seed']


def make_rng(*keys: int) -> np.random.Generator:
    if not keys:
        raise ValueError('at least one key is required')
    if any(int(key) < 0 for key in keys):
        raise ValueError(f'keys must be non-negative, got {keys}')
    sequence = np.random.SeedSequence([int(key) for key in keys])
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(*keys: int) -> int:
    """A 32-bit integer seed determined by ``keys``, for APIs that take a single seed."""
    if not keys:
        raise ValueError('at least one key is required')
    if any(int(key) < 0 for key in keys):
        raise ValueError(f'keys must be non-negative, got {keys}')
    return int(np.random.SeedSequence([int(key) for key in keys]).generate_state(1)[0])
