"""Deterministic random streams used everywhere randomness is needed.

The generator is splitmix64, chosen because it is counter-based: the i-th
output is a fixed 64-bit mixing function applied to ``seed + (i+1) * GAMMA``
(mod 2**64).  That makes the stream cheap to produce one value at a time or
as a vectorized block, with bit-identical results either way, on every
platform.  Training loops, subset sampling and data generation all draw from
instances of :class:`SplitMix64`, so a run is reproducible from its seed
alone.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_U64 = np.uint64
_INV_2_53 = 2.0 ** -53


def _finalize(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _finalize_block(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U64(30))) * _U64(_MIX1)
    z = (z ^ (z >> _U64(27))) * _U64(_MIX2)
    return z ^ (z >> _U64(31))


class SplitMix64:
    """Sequential view over the splitmix64 counter stream for one seed."""

    def __init__(self, seed: int):
        self._seed = int(seed) & _MASK
        self._count = 0

    def next_u64(self) -> int:
        self._count += 1
        return _finalize((self._seed + self._count * _GAMMA) & _MASK)

    def u64_block(self, n: int) -> np.ndarray:
        """The next ``n`` outputs as a uint64 array (same stream as next_u64)."""
        idx = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        return _finalize_block(_U64(self._seed) + idx * _U64(_GAMMA))

    def next_float(self) -> float:
        # 53-bit mantissa in [0, 1)
        return (self.next_u64() >> 11) * _INV_2_53

    def float_block(self, n: int) -> np.ndarray:
        return (self.u64_block(n) >> _U64(11)).astype(np.float64) * _INV_2_53

    def uniform_block(self, n: int, lo: float, hi: float) -> np.ndarray:
        return lo + (hi - lo) * self.float_block(n)

    def normal_block(self, n: int) -> np.ndarray:
        """Standard normals via Box-Muller; consumes 2*ceil(n/2) outputs."""
        m = (n + 1) // 2
        u1 = self.float_block(m)
        u2 = self.float_block(m)
        u1[u1 == 0.0] = _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(2.0 * np.pi * u2)
        out[1::2] = r * np.sin(2.0 * np.pi * u2)
        return out[:n]

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        limit = (_MASK + 1) - (_MASK + 1) % n
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n): argsort of n stream outputs."""
        keys = self.u64_block(n)
        return np.argsort(keys, kind="stable").astype(np.int64)

    def subset(self, n: int, k: int) -> np.ndarray:
        """Sorted uniform sample of k distinct indices from range(n)."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n}")
        pool = np.arange(n, dtype=np.int64)
        for i in range(k):
            j = i + self.randbelow(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        out = pool[:k]
        out.sort()
        return out
