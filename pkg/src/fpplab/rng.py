"""Counter-based random streams.

Every random number used by a field is a pure function of a 64-bit key and a
tuple of integer counters (stream id, cell index, slot). Values are produced
by chaining the SplitMix64 finaliser, fully vectorised over numpy arrays, so
a cell's contents never depend on which other cells were generated.
"""
from __future__ import annotations

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

# stream identifiers
COUNT = 1
COORD_X = 2
COORD_Y = 3
MARK = 4
TIEBREAK = 5
NOISE = 6


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash_words(key: int, *words) -> np.ndarray:
    """Hash a 64-bit key together with integer words (scalars or arrays,
    broadcast together; negative values are taken modulo 2^64)."""
    with np.errstate(over="ignore"):
        h = _mix(np.uint64(key & _MASK64) + _GOLDEN)
        for w in words:
            w = np.asarray(w)
            if w.dtype != np.uint64:
                w = w.astype(np.int64).view(np.uint64) if w.ndim else np.uint64(int(w) & _MASK64)
            h = _mix(h ^ (w + _GOLDEN))
    return h


def uniforms(key: int, *words) -> np.ndarray:
    """Uniform variates in the open interval (0, 1)."""
    h = hash_words(key, *words)
    return (np.asarray(h >> np.uint64(11), dtype=np.float64) + 0.5) * 2.0 ** -53


def derive_seed(key: int, *words) -> int:
    """A child 64-bit seed; used to split experiment seeds per sample."""
    return int(hash_words(key, *words))


def digest_seed(text: str) -> int:
    """Stable 64-bit seed from a string (e.g. a config digest)."""
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")
