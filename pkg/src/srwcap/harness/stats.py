"""Streaming moments, empirical samples, KS distance and bootstrap helpers."""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MomentAccumulator:
    """Count, mean and sum of squared deviations of a stream of reals."""

    count: int = 0
    mean: float = 0.0
    M2: float = 0.0

    @classmethod
    def from_values(cls, values):
        acc = cls()
        for v in np.asarray(values, dtype=np.float64).ravel():
            acc = acc.push(v)
        return acc

    def push(self, value):
        value = float(value)
        count = self.count + 1
        delta = value - self.mean
        mean = self.mean + delta / count
        return MomentAccumulator(count, mean, self.M2 + delta * (value - mean))

    @property
    def variance(self):
        """Unbiased sample variance; NaN below two observations."""
        return self.M2 / (self.count - 1) if self.count >= 2 else float("nan")

    def __add__(self, other):
        return welford_merge(self, other)


def welford_merge(x, y):
    """Pooled accumulator of two disjoint streams (Chan et al. update)."""
    if x.count == 0:
        return y
    if y.count == 0:
        return x
    count = x.count + y.count
    delta = y.mean - x.mean
    mean = x.mean + delta * y.count / count
    M2 = x.M2 + y.M2 + delta * delta * x.count * y.count / count
    return MomentAccumulator(count, mean, M2)


def reduce_accumulators(accs):
    """Fold accumulators left to right; callers pass them in replica order."""
    out = MomentAccumulator()
    for acc in accs:
        out = welford_merge(out, acc)
    return out


@dataclass(frozen=True, eq=False)
class EmpiricalSample:
    """Sorted sample with a free-form source tag."""

    values: np.ndarray
    source: str = ""

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=np.float64).ravel())
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self):
        return self.values.shape[0]

    def __len__(self):
        return self.size

    def scaled(self, c, source=None):
        return EmpiricalSample(self.values * c, self.source if source is None else source)


def ks_statistic(a, b):
    """Two-sample Kolmogorov-Smirnov distance ``sup |F_a - F_b|``."""
    a = a.values if isinstance(a, EmpiricalSample) else np.sort(np.asarray(a, dtype=np.float64))
    b = b.values if isinstance(b, EmpiricalSample) else np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("ks_statistic needs two nonempty samples")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.abs(fa - fb).max())


def ks_uniform(values):
    """One-sample KS distance to Uniform[0, 1]."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        return float("nan")
    i = np.arange(1, v.size + 1)
    return float(max((i / v.size - v).max(), (v - (i - 1) / v.size).max()))


def bootstrap(values, statistic, resamples, rng):
    """Statistic over ``resamples`` bootstrap resamples of a 1-d sample."""
    values = np.asarray(values, dtype=np.float64)
    idx = rng.integers(0, values.size, size=(resamples, values.size))
    return np.array([statistic(values[row]) for row in idx])


def sample_var(x):
    return float(np.var(x, ddof=1))


def rel_var(x):
    return float(np.var(x, ddof=1) / np.mean(x) ** 2)
