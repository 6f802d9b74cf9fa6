"""Counter-based splittable random numbers.

Every variate is a pure function of (seed, stream, time index, channel), so
trajectories can be sampled at any signed time in O(1), backward steps need
no stored state, and parallel trajectory streams never interact.  The mixing
function is the 64-bit splitmix finalizer, applied twice with a per-stream
key; all arithmetic is modulo 2**64 on numpy uint64 values so block
generation vectorizes.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = float(2.0 ** -53)


def _mix(x: np.uint64 | np.ndarray) -> np.uint64 | np.ndarray:
    # wrap-around multiplication is the point here
    with np.errstate(over="ignore"):
        x = (x ^ (x >> _S30)) * _MIX1
        x = (x ^ (x >> _S27)) * _MIX2
    return x ^ (x >> _S31)


def stream_key(seed: int, stream: int) -> np.uint64:
    """Derive the per-trajectory key from the run seed and the stream id."""
    return stream_keys(seed, np.array([stream], dtype=np.int64))[0]


def stream_keys(seed: int, streams: np.ndarray) -> np.ndarray:
    s = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    t = np.asarray(streams, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        return _mix(_mix(s + _GOLDEN) ^ _mix(t * _GOLDEN + _GOLDEN))


def _words(keys, times, channel: int):
    t = np.asarray(times, dtype=np.int64).astype(np.uint64)
    c = np.uint64(channel)
    with np.errstate(over="ignore"):
        return _mix(np.asarray(keys, dtype=np.uint64) ^ _mix(t * _GOLDEN + c))


def uniform(keys, times, channel: int = 0):
    """Uniform [0,1) variates indexed by (key, signed time, channel).

    ``keys`` and ``times`` broadcast against each other, so a (B,1) key
    column against an (L,) time row yields a (B,L) block in one call.
    """
    w = _words(keys, times, channel)
    return (w >> _S11) * _INV53


def integers(keys, times, n: int, channel: int = 0):
    """Uniform integers in [0, n) with the same indexing scheme."""
    u = uniform(keys, times, channel)
    return np.minimum((u * n).astype(np.int64), n - 1)
