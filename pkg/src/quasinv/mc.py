"""Seeded, chunked Monte Carlo plumbing.

Every stochastic routine in the package draws its randomness through
:func:`chunk_rng`.  Work is split into fixed-size chunks whose generators are
derived from ``(seed, chunk_index)`` only, and partial results are reduced in
chunk order.  The output therefore depends on the seed and the sample count,
never on how many threads ran the chunks (``QH_THREADS``).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np

from .errors import InputError

DEFAULT_CHUNK = 1 << 16
SEED_MAX = (1 << 64) - 1

T = TypeVar("T")


@dataclass(frozen=True)
class McEstimate:
    """A Monte Carlo estimate together with its provenance."""

    value: float
    std_error: float
    samples: int
    seed: int

    def __post_init__(self):
        if self.std_error < 0 or not math.isfinite(self.std_error):
            raise InputError(f"std_error must be finite and >= 0, got {self.std_error}")
        if self.samples < 1:
            raise InputError("samples must be positive")
        check_seed(self.seed)

    def within(self, target: float, n_sigma: float = 3.0) -> bool:
        """True if ``target`` lies within ``n_sigma`` reported standard errors."""
        return abs(self.value - target) <= n_sigma * self.std_error


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise InputError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise InputError("seed must be a 64-bit unsigned integer")
    return seed


def check_samples(samples, minimum: int = 1) -> int:
    if isinstance(samples, float):
        if not samples.is_integer():
            raise InputError(f"samples must be an integer, got {samples}")
        samples = int(samples)
    if not isinstance(samples, (int, np.integer)) or samples < minimum:
        raise InputError(f"samples must be an integer >= {minimum}, got {samples!r}")
    return int(samples)


def thread_count() -> int:
    """Worker cap from ``QH_THREADS`` (default: CPU count)."""
    raw = os.environ.get("QH_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise InputError(f"QH_THREADS must be an integer, got {raw!r}") from None
        return max(1, n)
    return os.cpu_count() or 1


def chunk_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Generator for chunk ``index`` of stream ``stream`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, index)))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed, used to give replicas independent streams."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def chunk_sizes(samples: int, chunk: int = DEFAULT_CHUNK) -> list[int]:
    full, rest = divmod(samples, chunk)
    return [chunk] * full + ([rest] if rest else [])


def map_chunks(
    fn: Callable[[np.random.Generator, int, int], T],
    seed: int,
    samples: int,
    chunk: int = DEFAULT_CHUNK,
    stream: int = 0,
) -> list[T]:
    """Run ``fn(rng, size, index)`` over all chunks, results in chunk order."""
    sizes = chunk_sizes(samples, chunk)
    jobs = [(chunk_rng(seed, i, stream), n, i) for i, n in enumerate(sizes)]
    workers = min(thread_count(), len(jobs))
    if workers <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def parallel_map(fn: Callable[[T], object], items: Sequence[T]) -> list:
    """Order-preserving map over independent work items (multi-starts, replicas)."""
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


class MomentAccumulator:
    """Streaming mean and variance (pairwise merge) of scalar or vector samples.

    ``add`` takes an array of shape ``(n,)`` or ``(n, k)``; for the latter the
    statistics are tracked per column.
    """

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape[0] == 0:
            return
        other = MomentAccumulator()
        other.n = values.shape[0]
        other.mean = values.mean(axis=0)
        other.m2 = np.square(values - other.mean).sum(axis=0)
        if values.ndim == 1:
            other.mean, other.m2 = float(other.mean), float(other.m2)
        self.merge(other)

    def merge(self, other: "MomentAccumulator") -> None:
        if other.n == 0:
            return
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.n / n)
        self.m2 = self.m2 + other.m2 + delta * delta * (self.n * other.n / n)
        self.n = n

    @property
    def variance(self):
        if self.n < 2:
            return 0.0 * self.m2
        return np.maximum(self.m2 / (self.n - 1), 0.0)

    @property
    def std_error(self):
        return np.sqrt(self.variance / self.n)

    def estimate(self, seed: int) -> McEstimate:
        return McEstimate(float(self.mean), float(self.std_error), self.n, seed)


def mean_estimate(values: np.ndarray, seed: int) -> McEstimate:
    """Sample mean and its standard error for an in-memory sample."""
    values = np.asarray(values, dtype=float)
    n = values.size
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return McEstimate(float(values.mean()), se, n, seed)
