"""Deterministic chunked map-reduce with mergeable moment accumulators.

Work is split into fixed-size index chunks whose boundaries depend only on the
total count and the chunk size, never on the number of workers. Each chunk
produces a :class:`Moments` record and the records are combined in a fixed
pairwise tree, so the floating-point result is the same for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

DEFAULT_CHUNK = 2048


@dataclass(frozen=True)
class Moments:
    """Count, mean and centred second moments of a complex-valued sample.

    ``m2_re`` and ``m2_im`` are sums of squared deviations of the real and
    imaginary parts, kept separately so per-component standard errors are
    available.
    """

    n: int
    mean: np.ndarray
    m2_re: np.ndarray
    m2_im: np.ndarray

    @classmethod
    def from_values(cls, values: np.ndarray) -> "Moments":
        """Moments of ``values`` stacked along axis 0."""
        values = np.asarray(values, dtype=complex)
        n = values.shape[0]
        if n == 0:
            raise ValueError("empty sample")
        mean = values.mean(axis=0)
        dev = values - mean
        return cls(n, mean, (dev.real**2).sum(axis=0), (dev.imag**2).sum(axis=0))

    def merge(self, other: "Moments") -> "Moments":
        """Chan's parallel update."""
        n = self.n + other.n
        delta = other.mean - self.mean
        frac = other.n / n
        mean = self.mean + delta * frac
        w = self.n * other.n / n
        m2_re = self.m2_re + other.m2_re + delta.real**2 * w
        m2_im = self.m2_im + other.m2_im + delta.imag**2 * w
        return Moments(n, mean, m2_re, m2_im)

    @property
    def variance(self) -> np.ndarray:
        """Per-component sample variance of the real and imaginary parts summed."""
        if self.n < 2:
            return np.zeros_like(self.m2_re)
        return (self.m2_re + self.m2_im) / (self.n - 1)

    @property
    def stderr(self) -> np.ndarray:
        """Standard error of the complex mean, |z - mean| scale."""
        return np.sqrt(self.variance / self.n)

    @property
    def stderr_re(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.m2_re)
        return np.sqrt(self.m2_re / (self.n - 1) / self.n)

    @property
    def stderr_im(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.m2_im)
        return np.sqrt(self.m2_im / (self.n - 1) / self.n)


def tree_reduce(parts: Sequence[Moments]) -> Moments:
    """Merge ``parts`` pairwise, level by level, in index order."""
    if not parts:
        raise ValueError("nothing to reduce")
    level = list(parts)
    while len(level) > 1:
        nxt = [level[i].merge(level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def chunk_bounds(n_items: int, chunk: int = DEFAULT_CHUNK) -> list[tuple[int, int]]:
    if n_items <= 0:
        raise ValueError("n_items must be positive")
    if chunk <= 0:
        raise ValueError("chunk must be positive")
    return [(a, min(a + chunk, n_items)) for a in range(0, n_items, chunk)]


def resolve_workers(workers: int | None) -> int:
    """Explicit count, else ``MLOOP_WORKERS``, else 1."""
    if workers is None:
        env = os.environ.get("MLOOP_WORKERS")
        workers = int(env) if env else 1
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return workers


def map_moments(
    func: Callable[..., Moments],
    n_items: int,
    args: tuple = (),
    workers: int | None = None,
    chunk: int = DEFAULT_CHUNK,
) -> Moments:
    """Evaluate ``func(start, stop, *args)`` over fixed chunks and tree-merge.

    ``func`` must be a module-level callable so it can be shipped to worker
    processes.
    """
    bounds = chunk_bounds(n_items, chunk)
    workers = min(resolve_workers(workers), len(bounds))
    if workers == 1:
        parts = [func(a, b, *args) for a, b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(func, a, b, *args) for a, b in bounds]
            parts = [f.result() for f in futures]
    return tree_reduce(parts)


def map_list(
    func: Callable[..., list],
    n_items: int,
    args: tuple = (),
    workers: int | None = None,
    chunk: int = DEFAULT_CHUNK,
) -> list:
    """Like :func:`map_moments` but concatenates per-chunk result lists in order."""
    bounds = chunk_bounds(n_items, chunk)
    workers = min(resolve_workers(workers), len(bounds))
    if workers == 1:
        parts = [func(a, b, *args) for a, b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(func, *zip(*[(a, b, *args) for a, b in bounds])))
    out: list = []
    for p in parts:
        out.extend(p)
    return out
