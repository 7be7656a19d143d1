"""Deterministic random streams for shot-level sampling.

Every random draw in the simulator comes from a counter-based stream: a
64-bit key is derived by hashing (master seed, experiment id, purpose)
and the i-th variate is a pure function of (key, i).  Draws therefore do
not depend on evaluation order or on any shared generator state, which
is what makes full runs bit-reproducible regardless of how work is
batched or parallelised.

The mixer is the splitmix64 finalizer; uniforms take the top 53 bits.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(x: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _fold(part) -> int:
    if isinstance(part, str):
        h = _FNV_OFFSET
        for b in part.encode("utf-8"):
            h = ((h ^ b) * _FNV_PRIME) & _MASK
        return h
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK
    raise TypeError(f"cannot fold {type(part).__name__} into a stream key")


def derive_key(*parts) -> int:
    """Hash (seed, labels, indices, ...) into a 64-bit stream key."""
    key = 0
    for part in parts:
        key = mix64(key ^ _fold(part))
    return key


def _mix_array(z: np.ndarray) -> np.ndarray:
    # uint64 arithmetic wraps; that is the point.
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


def _raw(key: int, start: int, n: int) -> np.ndarray:
    idx = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = np.uint64(key) + idx * np.uint64(_GOLDEN)
    return _mix_array(state)


def uniforms(key: int, start: int, n: int) -> np.ndarray:
    """n doubles in [0, 1), the (start..start+n-1)-th variates of the stream."""
    return (_raw(key, start, n) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def open_uniforms(key: int, start: int, n: int) -> np.ndarray:
    """Uniforms on the open interval (0, 1); safe for inverse-CDF maps."""
    m = (_raw(key, start, n) >> np.uint64(11)).astype(np.float64)
    return (m + 0.5) * 2.0**-53


def normals(key: int, start: int, n: int) -> np.ndarray:
    """Standard normal variates via the inverse CDF (deterministic)."""
    return ndtri(open_uniforms(key, start, n))


def generator(key: int) -> np.random.Generator:
    """A PCG64 generator seeded from a stream key.

    Used only where bulk non-counter sampling is convenient (bootstrap
    resampling); the key pins the whole draw sequence.
    """
    return np.random.Generator(np.random.PCG64(key))
