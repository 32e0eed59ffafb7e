"""Walker/Vose alias tables for O(1) weighted draws."""

from __future__ import annotations

import numpy as np


class AliasTable:
    """Alias table over ``len(weights)`` outcomes.

    ``prob`` and ``alias`` are plain arrays so compiled kernels can draw from
    the table without touching this object.
    """

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or len(w) == 0:
            raise ValueError("weights must be a non-empty 1-d sequence")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        total = w.sum()
        if total <= 0:
            raise ValueError("weights sum to zero")
        n = len(w)
        scaled = w * (n / total)
        prob = np.ones(n)
        alias = np.arange(n, dtype=np.int64)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            lo = small.pop()
            hi = large.pop()
            prob[lo] = scaled[lo]
            alias[lo] = hi
            scaled[hi] = scaled[hi] + scaled[lo] - 1.0
            if scaled[hi] < 1.0:
                small.append(hi)
            else:
                large.append(hi)
        # leftovers are 1 up to round-off
        for i in small + large:
            prob[i] = 1.0
            alias[i] = i
        self.prob = prob
        self.alias = alias
        self.weights = w / total

    def __len__(self):
        return len(self.prob)

    def draw(self, rng: np.random.Generator, size: int | None = None):
        n = len(self.prob)
        if size is None:
            i = int(rng.integers(n))
            return i if rng.random() < self.prob[i] else int(self.alias[i])
        idx = rng.integers(n, size=size)
        coin = rng.random(size)
        return np.where(coin < self.prob[idx], idx, self.alias[idx])
