"""Distribution and uncertainty machinery.

All randomness runs through numpy's Philox generator, a counter-based
64-bit PRNG: results are reproducible from (seed, stream) pairs, and
per-lag bootstrap streams are derived deterministically so parallel or
repeated runs agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for (seed, stream); same pair, same draws."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class Ecdf:
    """Right-continuous empirical distribution of a sample."""

    values: np.ndarray  # sorted, float64

    def __post_init__(self):
        if len(self.values) == 0:
            raise ValueError("empty sample")

    @property
    def n(self) -> int:
        return len(self.values)

    def __call__(self, x):
        """Fraction of the sample <= x (scalar or array)."""
        pos = np.searchsorted(self.values, x, side="right")
        out = pos / self.n
        return float(out) if np.isscalar(x) else out

    def points(self):
        """(x, F(x)) at the unique sample values; plot-ready step knots."""
        xs, counts = np.unique(self.values, return_counts=True)
        return xs, np.cumsum(counts) / self.n

    def csv_bytes(self, upper_tail: bool = False) -> bytes:
        xs, fs = self.points()
        col = 1.0 - fs if upper_tail else fs
        head = "x,tail\n" if upper_tail else "x,F\n"
        body = "".join(f"{repr(float(x))},{repr(float(f))}\n" for x, f in zip(xs, col))
        return (head + body).encode()


def ecdf(samples) -> Ecdf:
    arr = np.sort(np.asarray(samples, dtype=np.float64))
    return Ecdf(arr)


def min_shifted_ecdf(samples) -> Ecdf:
    """ECDF after subtracting the sample minimum; support starts at 0."""
    arr = np.sort(np.asarray(samples, dtype=np.float64))
    if len(arr) == 0:
        raise ValueError("empty sample")
    return Ecdf(arr - arr[0])


class BootstrapEstimate(NamedTuple):
    point: float
    stderr: float
    b: int
    seed: int
    stream: int


def bootstrap_stderr(
    samples,
    b: int = 10000,
    seed: int = 0,
    stream: int = 0,
    _chunk_elems: int = 8_000_000,
) -> BootstrapEstimate:
    """Standard error of the mean via nonparametric bootstrap.

    Draws b resamples of size n with replacement and returns the sample
    standard deviation of their means. The input is sorted first, so the
    estimate depends only on the multiset of values, and the generator is
    keyed by (seed, stream) so every lag of a curve gets its own
    deterministic stream.
    """
    arr = np.sort(np.asarray(samples, dtype=np.float64))
    n = len(arr)
    if n == 0:
        raise ValueError("empty sample")
    if b < 1:
        raise ValueError("b must be at least 1")
    rng = make_rng(seed, stream)
    means = np.empty(b)
    step = max(1, _chunk_elems // n)
    done = 0
    while done < b:
        m = min(step, b - done)
        idx = rng.integers(0, n, size=(m, n))
        means[done : done + m] = arr[idx].mean(axis=1)
        done += m
    point = float(arr.mean())
    stderr = float(means.std(ddof=1)) if b > 1 else 0.0
    return BootstrapEstimate(point, stderr, b, seed, stream)


def symlog(values, linear_threshold: float = 1e-4):
    """Signed log transform with a linear core.

    Identity-scaled inside |x| <= threshold (threshold maps to 1), base-10
    logarithmic outside; continuous, strictly monotone, and odd.
    """
    if linear_threshold <= 0:
        raise ValueError("linear_threshold must be positive")
    x = np.asarray(values, dtype=np.float64)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    inner = np.abs(x) <= linear_threshold
    out[inner] = x[inner] / linear_threshold
    xo = x[~inner]
    out[~inner] = np.sign(xo) * (1.0 + np.log10(np.abs(xo) / linear_threshold))
    return float(out[0]) if scalar else out
