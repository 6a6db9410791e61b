"""Counter-based random streams.

Every draw is a pure function of ``(key, counter)``: the SplitMix64 finalizer
applied to ``key + (counter + 1) * GOLDEN``.  Keys for sub-streams (a trial,
a vertex) are derived by hashing, so any instruction can be regenerated in
O(1) without storing history.
"""

from __future__ import annotations

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_VERTEX = np.uint64(0xD1B54A32D192ED03)
_INV53 = 1.0 / 9007199254740992.0

# domain labels keep tape, driving and sampler streams disjoint
TAPE = 1
DRIVING = 2
SAMPLER = 3
AUX = 4


@njit(cache=True, inline="always")
def mix64(z):
    z = np.uint64(z)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def vertex_key(key, v):
    return mix64(np.uint64(key) + np.uint64(v + 1) * _VERTEX)


@njit(cache=True, inline="always")
def uniform(key, counter):
    """Uniform double in [0, 1) from 53 high bits."""
    x = mix64(np.uint64(key) + np.uint64(counter + 1) * GOLDEN)
    return np.float64(x >> np.uint64(11)) * _INV53


@njit(cache=True)
def _derive(seed, label):
    return mix64(mix64(np.uint64(seed) + GOLDEN) ^ mix64(np.uint64(label) * _VERTEX + GOLDEN))


def to_u64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)


def derive(seed: int | np.uint64, *labels: int) -> np.uint64:
    """Key for the sub-stream named by ``labels`` under ``seed``."""
    key = to_u64(seed)
    for label in labels:
        key = np.uint64(_derive(key, to_u64(label)))
    return key
