"""Counter-based SplitMix64 streams.

Every random draw is a pure function of (master seed, replica, step), so a
replica's word does not depend on how many other replicas are simulated or
in which order. Stream ``r`` is the SplitMix64 sequence started from
``mix64(seed ^ mix64((r + 1) * GAMMA))``; its ``n``-th output is
``mix64(stream + (n + 1) * GAMMA)``.
"""

import operator

import numpy as np
from numba import njit, uint64

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# purpose tags, xored into the master seed so that different uses of the same
# seed never share a stream
TAG_WORDS = 0
TAG_SECOND_WORD = 0x5EC0_11D0_0000_0001
TAG_START = 0x57A7_0000_0000_0002
TAG_BIRKHOFF = 0xB1C0_FF00_0000_0003
TAG_WARM = 0x3A53_0000_0000_0004


def mix64(z):
    """SplitMix64 finalizer on Python ints (reference implementation)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_seed(seed, replica, tag=TAG_WORDS):
    return mix64((seed ^ tag) ^ mix64((replica + 1) * GAMMA))


def uniform(stream, step):
    """The ``step``-th uniform on [0, 1) of a stream (53-bit resolution)."""
    return (mix64(stream + (step + 1) * GAMMA) >> 11) * 2.0**-53


@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> uint64(30))) * uint64(_M1)
    z = (z ^ (z >> uint64(27))) * uint64(_M2)
    return z ^ (z >> uint64(31))


@njit(cache=True)
def _uniform(stream, step):
    z = _mix64(stream + uint64(step + 1) * uint64(GAMMA))
    return float(z >> uint64(11)) * 1.1102230246251565e-16


@njit(cache=True)
def _draw_index(cum, u):
    m = cum.shape[0]
    for k in range(m - 1):
        if u < cum[k]:
            return k
    return m - 1


def stream_seeds(seed, replicas, tag=TAG_WORDS):
    """Stream seeds for replicas ``0..replicas-1`` as a uint64 array."""
    r = np.arange(1, replicas + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        inner = _mix64_np(r * np.uint64(GAMMA))
        return _mix64_np(np.uint64((seed ^ tag) & MASK64) ^ inner)


def _mix64_np(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def check_seed(seed):
    seed = operator.index(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed
