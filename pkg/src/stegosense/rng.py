"""Counter-based uniform variates.

Every draw is a pure function of ``(seed, stream, i, j)``, so sampling a
pixel grid gives the same numbers no matter how the grid is chunked or
which worker handles which rows.
"""

from __future__ import annotations

import numpy as np

GENERATOR_NAME = "splitmix64-v1"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash64(*keys) -> np.ndarray:
    """Fold integer keys (scalars or broadcastable arrays) into one uint64 hash."""
    with np.errstate(over="ignore"):
        h = np.uint64(0)
        for k in keys:
            k = np.asarray(k).astype(np.uint64)
            h = _mix(h + _GOLDEN + k)
    return h


def uniform_grid(seed: int, shape: tuple[int, int], stream: int = 0) -> np.ndarray:
    """Uniforms in [0, 1) for every pixel of ``shape``, keyed by (seed, stream, i, j)."""
    rows = np.arange(shape[0], dtype=np.uint64)[:, None]
    cols = np.arange(shape[1], dtype=np.uint64)[None, :]
    bits = hash64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), stream, rows, cols)
    # top 53 bits -> exact double in [0, 1)
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def derive_seed(seed: int, *keys: int) -> int:
    """Child seed for a sub-task, e.g. ``derive_seed(seed, cover_index)``."""
    return int(hash64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), *keys))
