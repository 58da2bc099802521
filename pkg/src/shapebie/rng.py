"""xorshift64* generator for reproducible sample points.

    x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27
    out = x * 0x2545F4914F6CDD1D  (mod 2^64)

Uniform doubles use the top 53 bits of ``out``.  A zero seed is replaced by
0x9E3779B97F4A7C15 (the state must never be zero).
"""

import numpy as np

_MASK = (1 << 64) - 1
_MULT = 0x2545F4914F6CDD1D
_ZERO_SEED = 0x9E3779B97F4A7C15


class XorShift64Star:
    def __init__(self, seed):
        self.state = (int(seed) & _MASK) or _ZERO_SEED

    def next_u64(self):
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self.state = x
        return (x * _MULT) & _MASK

    def uniform(self, size=None, low=0.0, high=1.0):
        count = 1 if size is None else int(np.prod(size))
        vals = np.array([(self.next_u64() >> 11) * 2.0**-53 for _ in range(count)])
        vals = low + (high - low) * vals
        return float(vals[0]) if size is None else vals.reshape(size)

    def normal(self, size):
        """Box-Muller pairs from consecutive uniforms."""
        count = int(np.prod(size))
        u1 = 1.0 - self.uniform(count)
        u2 = self.uniform(count)
        return (np.sqrt(-2 * np.log(u1)) * np.cos(2 * np.pi * u2)).reshape(size)

    def directions(self, count, dim):
        v = self.normal((count, dim))
        return v / np.linalg.norm(v, axis=1, keepdims=True)
