"""Multiply-accumulate bookkeeping for the estimation and cancellation stages.

Counts are analytic: each wrapped primitive adds the number of complex
multiply-accumulates a straightforward implementation needs (``m*n*k`` for
a product, ``n^3/3`` for an LU factorisation, ``n log2 n`` for a radix-2
FFT).  Counting is off unless a counter is passed in, so the simulation hot
path only pays for a ``None`` check.
"""

from collections import Counter
from contextlib import contextmanager

import numpy as np

__all__ = ["OpCounter", "NULL_COUNTER"]


class OpCounter:
    def __init__(self):
        self.counts = Counter()
        self._stage = "other"

    @contextmanager
    def stage(self, name):
        prev, self._stage = self._stage, name
        try:
            yield self
        finally:
            self._stage = prev

    def add(self, n, stage=None):
        self.counts[stage or self._stage] += int(n)

    def __getitem__(self, stage):
        return self.counts[stage]

    def total(self, prefix=""):
        return sum(v for k, v in self.counts.items() if k.startswith(prefix))

    def reset(self):
        self.counts.clear()

    # wrapped primitives

    def matmul(self, a, b):
        a, b = np.asarray(a), np.asarray(b)
        m = a.shape[0] if a.ndim > 1 else 1
        k = a.shape[-1]
        n = b.shape[1] if b.ndim > 1 else 1
        self.add(m * k * n)
        return a @ b

    def solve(self, a, b):
        """Dense LU solve of ``a x = b`` for a general square ``a``."""
        n = a.shape[0]
        nrhs = b.shape[1] if b.ndim > 1 else 1
        self.add(n**3 // 3 + n**2 * nrhs)
        return np.linalg.solve(a, b)

    def fft(self, x, axis=-1, inverse=False):
        n = x.shape[axis]
        batch = x.size // n
        self.add(batch * int(np.ceil(n * np.log2(max(n, 2)) / 2)))
        return np.fft.ifft(x, axis=axis) if inverse else np.fft.fft(x, axis=axis)

    def elementwise(self, a, b):
        a = np.asarray(a)
        self.add(np.broadcast(a, b).size)
        return a * b


class _NullCounter(OpCounter):
    def add(self, n, stage=None):
        pass

    @contextmanager
    def stage(self, name):
        yield self


NULL_COUNTER = _NullCounter()
