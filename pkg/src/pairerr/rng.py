"""Counter-based deterministic random numbers.

Every stochastic routine in the package draws from a stateless generator:
a 64-bit stream key (derived from the user-facing seed plus structural
indices such as pair or run numbers) is mixed with a per-draw counter
through the SplitMix64 finalizer. Draw (key, counter) always yields the
same value, independent of execution order or thread scheduling, which is
what makes subset sampling, synthetic matrices, and mock responses
reproducible and safely parallel.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_U_GOLDEN = np.uint64(_GOLDEN)
_U_MIX1 = np.uint64(_MIX1)
_U_MIX2 = np.uint64(_MIX2)
_INV_2_53 = float(2.0**-53)


def _mix64(x: int) -> int:
    """SplitMix64 finalizer on a Python int (already masked to 64 bits)."""
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK64
    return x ^ (x >> 31)


def mix_key(*fields: int) -> int:
    """Fold integer fields into a 64-bit stream key.

    Successive fields are absorbed through the SplitMix64 finalizer, so
    (seed, 2, 5) and (seed, 5, 2) give unrelated streams. Negative fields
    are taken modulo 2**64.
    """
    key = 0
    for field in fields:
        key = _mix64(key ^ (int(field) & _MASK64))
    return key


def uniforms(key: int, counters: np.ndarray | int) -> np.ndarray:
    """Uniform [0, 1) draws at the given counters of stream `key`.

    `counters` may be any shape; the result has the same shape with
    dtype float64. Each (key, counter) pair maps to one fixed value.
    """
    c = np.atleast_1d(np.asarray(counters, dtype=np.uint64))
    with np.errstate(over="ignore"):
        x = np.uint64(key & _MASK64) + (c + np.uint64(1)) * _U_GOLDEN
        x = (x ^ (x >> np.uint64(30))) * _U_MIX1
        x = (x ^ (x >> np.uint64(27))) * _U_MIX2
        x = x ^ (x >> np.uint64(31))
    out = (x >> np.uint64(11)).astype(np.float64) * _INV_2_53
    return out.reshape(np.shape(counters))


def uniform(key: int, counter: int) -> float:
    """Single uniform [0, 1) draw; scalar convenience over `uniforms`."""
    x = (key + ((counter + 1) * _GOLDEN)) & _MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK64
    x = x ^ (x >> 31)
    return (x >> 11) * _INV_2_53
