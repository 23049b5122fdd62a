"""SplitMix64 pseudo-random generator (Steele, Lea & Flood 2014).

A 64-bit splittable generator: the state advances by the golden-gamma
increment and each output is the finalizer hash of the state. Streams for
replication k are derived by hashing (base_seed, k), which makes every
replication reproducible independently of thread scheduling.
"""

from __future__ import annotations

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


@njit(cache=True, nogil=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True, inline="always")
def rng_next(state):
    """Advance the generator and return a uniform double in (0, 1]."""
    state[0] = state[0] + GOLDEN
    z = _mix64(state[0])
    return (np.float64(z >> np.uint64(11)) + 1.0) * (2.0 ** -53)


def stream_state(base_seed: int, stream: int = 0) -> np.ndarray:
    """Initial SplitMix64 state for a (seed, stream) pair."""
    z = ((base_seed & _MASK) + (stream & _MASK) * int(GOLDEN)) & _MASK
    # one finalizer round decorrelates nearby seeds
    z = ((z ^ (z >> 30)) * int(_MIX1)) & _MASK
    z = ((z ^ (z >> 27)) * int(_MIX2)) & _MASK
    z ^= z >> 31
    return np.array([z], dtype=np.uint64)
