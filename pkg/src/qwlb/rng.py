"""Deterministic random numbers for reproducible experiments.

Two generators live here, both fixed-algorithm so that results are stable
across platforms and numpy versions:

* :class:`XorShift64Star`, Marsaglia's 64-bit xorshift shift-register
  generator with the ``*`` output multiplier (shifts 12, 25, 27 and
  multiplier 0x2545F4914F6CDD1D).  Used wherever a sequential stream is
  needed (impurity placement).
* :func:`noise`, a stateless counter-based mixer: a xorshift-multiply
  avalanche applied to ``(index, step, seed)``.  Used to build reproducible
  space-time dependent test fields without carrying generator state.
"""

from __future__ import annotations

import numpy as np

_MULT = np.uint64(0x2545F4914F6CDD1D)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


class XorShift64Star:
    """xorshift64* stream; 2^64-1 period, never yields state 0."""

    def __init__(self, seed: int):
        # State must be nonzero; fold seed 0 onto a fixed odd constant.
        self._state = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) or _GOLDEN

    def next_u64(self) -> int:
        x = self._state
        with np.errstate(over="ignore"):
            x ^= x >> np.uint64(12)
            x ^= (x << np.uint64(25)) & np.uint64(0xFFFFFFFFFFFFFFFF)
            x ^= x >> np.uint64(27)
            self._state = x
            return int((x * _MULT) & np.uint64(0xFFFFFFFFFFFFFFFF))

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def choose(self, n: int, k: int) -> np.ndarray:
        """Exactly k distinct indices from range(n), partial Fisher-Yates."""
        if not 0 <= k <= n:
            raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
        idx = np.arange(n, dtype=np.int64)
        for i in range(k):
            j = i + self.below(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        return np.sort(idx[:k])


def _mix(x: np.ndarray) -> np.ndarray:
    # splitmix-style finalizer: xorshift + odd multipliers, full avalanche
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * _MIX1
        x = (x ^ (x >> np.uint64(27))) * _MIX2
        x = x ^ (x >> np.uint64(31))
    return x


def noise(index, step: int, seed: int, channel: int = 0) -> np.ndarray:
    """Stateless uniform noise in [-1, 1) keyed by (index, step, seed, channel).

    ``index`` may be a scalar or integer array; the result has its shape.
    """
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        key = idx * _GOLDEN
        key ^= _mix(np.uint64(step & 0xFFFFFFFFFFFFFFFF) + _MIX1)
        key ^= _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _MIX2 * np.uint64(channel + 1))
    bits = _mix(key)
    # top 53 bits -> double in [0,1), then stretch to [-1,1)
    u = (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
    return 2.0 * u - 1.0
