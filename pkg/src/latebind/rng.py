"""Seeded, portable random streams (SplitMix64 in counter mode).

Every random quantity in the project is derived from a 64-bit seed through
SplitMix64, evaluated as a pure function of (seed, counter).  This keeps
runs bitwise reproducible across machines and lets independent consumers
(data generation, clock noise, drift schedules) draw from non-overlapping
streams without shared mutable state.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = 0xFFFFFFFFFFFFFFFF

# numpy deliberately wraps uint64 arithmetic mod 2**64; silence its warnings
# locally rather than globally (errstate objects are single-use in numpy 2.x).
def _wrap() -> np.errstate:
    return np.errstate(over="ignore")


def mix64(z: int) -> int:
    """SplitMix64 finalizer for one 64-bit value (scalar, pure Python)."""
    z &= _MASK
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
    return (z ^ (z >> 31)) & _MASK


def fnv1a64(label: str) -> int:
    """FNV-1a hash of a label, used to derive named substreams."""
    h = 0xCBF29CE484222325
    for byte in label.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK
    return h


def derive_seed(seed: int, label: str, index: int = 0) -> int:
    """Deterministic child seed for a named substream."""
    return mix64(mix64(seed & _MASK) ^ fnv1a64(label) ^ mix64(index & _MASK))


def stream_u64(seed: int, start: int, count: int) -> np.ndarray:
    """Vectorized SplitMix64 outputs for counters start..start+count-1."""
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    with _wrap():
        idx = np.arange(start, start + count, dtype=np.uint64)
        z = (np.uint64(seed & _MASK) + (idx + np.uint64(1)) * _GOLDEN).astype(np.uint64)
        z ^= z >> np.uint64(30)
        z *= _MIX1
        z ^= z >> np.uint64(27)
        z *= _MIX2
        z ^= z >> np.uint64(31)
    return z


def stream_unit(seed: int, start: int, count: int) -> np.ndarray:
    """Uniform floats in [0, 1) with 53-bit resolution."""
    return (stream_u64(seed, start, count) >> np.uint64(11)).astype(np.float64) * 2.0**-53


class Stream:
    """Stateful cursor over one SplitMix64 counter stream.

    The cursor only tracks how many values were consumed; the values
    themselves are a pure function of (seed, position), so interleaving
    consumers never perturb each other as long as they hold distinct seeds.
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        self._pos = 0

    def u64(self, count: int) -> np.ndarray:
        out = stream_u64(self.seed, self._pos, count)
        self._pos += count
        return out

    def unit(self, count: int) -> np.ndarray:
        out = stream_unit(self.seed, self._pos, count)
        self._pos += count
        return out

    def integers(self, low: int, high: int, count: int) -> np.ndarray:
        """Uniform int64 in [low, high] inclusive.

        Uses modulo reduction; the bias is O(range / 2**64), irrelevant for
        the integer domains used here.
        """
        if high < low:
            raise ValueError(f"empty range [{low}, {high}]")
        span = np.uint64(high - low + 1)
        with _wrap():
            vals = self.u64(count) % span
        return (vals.astype(np.int64) + np.int64(low)).astype(np.int64)

    def normals(self, count: int) -> np.ndarray:
        """Standard normals via Box-Muller on consecutive unit pairs."""
        pairs = (count + 1) // 2
        raw = self.unit(pairs * 2)
        u1 = (raw[0::2] + 2.0**-54).clip(max=1.0)  # avoid log(0)
        u2 = raw[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(pairs * 2, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:count]
