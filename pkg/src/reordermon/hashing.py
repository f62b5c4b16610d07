"""Seedable 64-bit mixing for bucket placement.

The detectors only need a deterministic, roughly uniform map from a prefix
and a seed to a bucket index, plus a vectorized twin of the same map so the
batch path lands every packet in the same bucket as the scalar path.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(x: int) -> int:
    """Finalizing 64-bit avalanche mix (splitmix64 style)."""
    x = (x + _GOLDEN) & _MASK64
    x ^= x >> 30
    x = (x * _MIX1) & _MASK64
    x ^= x >> 27
    x = (x * _MIX2) & _MASK64
    x ^= x >> 31
    return x


def bucket_index(prefix_bits: int, seed: int, n_buckets: int) -> int:
    """Bucket for one prefix under one seed."""
    return mix64(prefix_bits ^ mix64(seed)) % n_buckets


def stage_seed(master_seed: int, stage: int) -> int:
    """Derive one independent-looking seed per probe stage."""
    return mix64((master_seed << 8) ^ stage)


def bucket_index_array(
    prefix_bits: np.ndarray, seed: int, n_buckets: int
) -> np.ndarray:
    """Vectorized ``bucket_index`` over an array of prefix bits."""
    x = prefix_bits.astype(np.uint64)
    x = x ^ np.uint64(mix64(seed))
    with np.errstate(over="ignore"):
        x = x + np.uint64(_GOLDEN)
        x ^= x >> np.uint64(30)
        x = x * np.uint64(_MIX1)
        x ^= x >> np.uint64(27)
        x = x * np.uint64(_MIX2)
        x ^= x >> np.uint64(31)
    return (x % np.uint64(n_buckets)).astype(np.int64)
