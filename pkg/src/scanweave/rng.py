"""Counter-based pseudo-random streams.

Sampling masks must be bit-reproducible regardless of evaluation order or
thread count, so no stateful generator is shared: the uniform draw for pixel
``p`` under ``seed`` is a pure function of ``(seed, p)``. Each pixel owns the
``p``-th output of a SplitMix64 sequence keyed by the seed, i.e.
``mix64(mix64(seed) + (p + 1) * GOLDEN)``, where ``mix64`` is the SplitMix64
finalizer. Evaluating pixels in any order, in any partition across threads,
yields identical bits.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64_int(x: int) -> int:
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def _mix64(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MIX1)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MIX2)
    x ^= x >> np.uint64(31)
    return x


def pixel_uniforms(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Uniforms in [0, 1) for pixel indices ``start .. start+count-1``.

    Pure function of (seed, pixel index); slicing a range out of a larger
    range returns the same values.
    """
    state = _mix64_int(int(seed))
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    bits = _mix64(np.uint64(state) + idx * np.uint64(_GOLDEN))
    # top 53 bits give a dyadic uniform with full double-precision support
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def derive_seed(seed: int, label: str) -> int:
    """Stable sub-seed for a named stream (experiment cells, per-band draws)."""
    state = _mix64_int(int(seed))
    for byte in label.encode("utf-8"):
        state = _mix64_int(state + _GOLDEN + byte)
    return state
