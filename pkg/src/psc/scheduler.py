"""Outer-iteration dependency graph and partitioning into ordered groups."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel_model import KernelKind
from .matrix_io import CsrMatrix, check_triangular

__all__ = [
    "DependencyGraph",
    "Schedule",
    "find_dependencies",
    "partition_iteration_space",
    "level_sets",
    "balanced_ranges",
    "dump_schedule",
]


@dataclass(frozen=True, eq=False)
class DependencyGraph:
    """Flow dependencies between rows; every edge (src, dst) has src < dst."""

    n_vertices: int
    src: np.ndarray
    dst: np.ndarray

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.src.tolist(), self.dst.tolist()))

    @property
    def n_edges(self) -> int:
        return int(self.src.size)


@dataclass(frozen=True)
class Schedule:
    partitions: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.partitions)

    def partition_of(self) -> np.ndarray:
        n = sum(len(p) for p in self.partitions)
        where = np.full(n, -1, dtype=np.int64)
        for k, p in enumerate(self.partitions):
            where[list(p)] = k
        return where

    def is_legal(self, g: DependencyGraph) -> bool:
        where = self.partition_of()
        return bool(np.all(where[g.src] < where[g.dst]))


def find_dependencies(kernel: KernelKind | str, pattern: CsrMatrix) -> DependencyGraph:
    """SpMV rows are independent. SpTRSV row i reads x[j] for each
    off-diagonal L[i, j], giving the edge (j, i)."""
    kernel = KernelKind(kernel)
    empty = np.zeros(0, dtype=np.int64)
    if kernel is KernelKind.SPMV:
        return DependencyGraph(pattern.n_rows, empty, empty)
    check_triangular(pattern)
    rows = np.repeat(np.arange(pattern.n_rows, dtype=np.int64), pattern.row_lengths())
    off = pattern.col_indices != rows
    return DependencyGraph(pattern.n_rows, pattern.col_indices[off].copy(), rows[off])


def level_sets(g: DependencyGraph) -> np.ndarray:
    """Longest-path depth of every vertex (0 for vertices with no inputs)."""
    level = np.zeros(g.n_vertices, dtype=np.int64)
    if g.n_edges == 0:
        return level
    order = np.argsort(g.dst, kind="stable")
    src, dst = g.src[order], g.dst[order]
    bounds = np.searchsorted(dst, np.arange(g.n_vertices + 1))
    # src < dst, so increasing vertex order is a topological order
    for v in range(g.n_vertices):
        lo, hi = bounds[v], bounds[v + 1]
        if hi > lo:
            level[v] = level[src[lo:hi]].max() + 1
    return level


def balanced_ranges(weights: np.ndarray, n_groups: int) -> list[tuple[int, int]]:
    """Split ``range(len(weights))`` into at most ``n_groups`` contiguous,
    non-empty ranges whose weight sums are near ``total / n_groups``.

    Each cut is placed at the prefix sum nearest to its ideal position, so no
    range deviates from the ideal by more than the heaviest single item.
    """
    n = len(weights)
    if n == 0:
        return []
    prefix = np.concatenate(([0], np.cumsum(weights)))
    total = prefix[-1]
    cuts = [0]
    for k in range(1, n_groups):
        target = total * k / n_groups
        c = int(np.searchsorted(prefix, target))
        if c > 0 and (c > n or target - prefix[c - 1] <= prefix[c] - target):
            c -= 1
        cuts.append(min(max(c, cuts[-1]), n))
    cuts.append(n)
    return [(a, b) for a, b in zip(cuts, cuts[1:]) if b > a]


def partition_iteration_space(g: DependencyGraph, pattern: CsrMatrix, target_groups: int = 1) -> Schedule:
    """Level sets when ``g`` has edges, otherwise nnz-balanced row ranges."""
    if target_groups < 1:
        raise ValueError("target_groups must be >= 1")
    if g.n_edges:
        level = level_sets(g)
        order = np.argsort(level, kind="stable")
        bounds = np.searchsorted(level[order], np.arange(level.max() + 2))
        parts = tuple(tuple(order[a:b].tolist()) for a, b in zip(bounds, bounds[1:]))
        return Schedule(parts)
    ranges = balanced_ranges(pattern.row_lengths(), target_groups)
    return Schedule(tuple(tuple(range(a, b)) for a, b in ranges))


def dump_schedule(s: Schedule) -> str:
    return "".join(" ".join(str(r) for r in p) + "\n" for p in s.partitions)
