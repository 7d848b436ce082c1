"""Polyhedral view of SpMV / SpTRSV over a concrete sparsity pattern.

The kernels are doubly nested, ``for i0: for i1: OUT[.] += MAT[.] * VEC[.]``.
Access functions are tabulated from the pattern: each one is a flat index
array over the iteration points, laid out row by row, so first-order partial
differences (FOPDs) are plain array differences.

For SpTRSV the inner loop runs over the off-diagonal entries of a row only;
the division by the diagonal is kept outside the multiply-add statement and
the diagonal's position is recorded on the iteration space.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .matrix_io import CsrMatrix, check_triangular

__all__ = [
    "KernelKind",
    "Role",
    "CodeletKind",
    "IterationSpace",
    "AccessFunction",
    "Region",
    "FopdTable",
    "compute_access_functions",
    "compute_fopd",
    "fopd_of_table",
    "classify_codelet",
    "classify_tables",
    "dump_region",
]


class KernelKind(str, enum.Enum):
    SPMV = "spmv"
    SPTRSV = "sptrsv"


class Role(str, enum.Enum):
    OUT = "out"
    MAT = "mat"
    VEC = "vec"


class CodeletKind(str, enum.Enum):
    BLAS = "BLAS"
    PSC_I = "PSC_I"
    PSC_II = "PSC_II"
    NONE = "NONE"


@dataclass(frozen=True, eq=False)
class IterationSpace:
    """Outer rows and their inner extents.

    Points of row ``i0`` occupy ``point_offsets[i0]:point_offsets[i0+1]`` in
    every access-function table.
    """

    kernel: KernelKind
    n_rows: int
    point_offsets: np.ndarray
    diag_index: np.ndarray | None = None

    @property
    def rows(self) -> np.ndarray:
        return np.arange(self.n_rows)

    @property
    def inner_extents(self) -> np.ndarray:
        return np.diff(self.point_offsets)

    def inner_extent(self, i0: int) -> int:
        return int(self.point_offsets[i0 + 1] - self.point_offsets[i0])

    @property
    def n_points(self) -> int:
        return int(self.point_offsets[-1])

    def point(self, i0: int, i1: int) -> int:
        if not 0 <= i1 < self.inner_extent(i0):
            raise IndexError(f"({i0}, {i1}) is outside the iteration space")
        return int(self.point_offsets[i0] + i1)


@dataclass(frozen=True, eq=False)
class AccessFunction:
    role: Role
    space: IterationSpace
    table: np.ndarray

    def index_at(self, i0: int, i1: int) -> int:
        return int(self.table[self.space.point(i0, i1)])

    def row(self, i0: int) -> np.ndarray:
        po = self.space.point_offsets
        return self.table[po[i0]:po[i0 + 1]]


def compute_access_functions(kernel: KernelKind | str, pattern: CsrMatrix):
    """Tabulate (OUT, MAT, VEC, IterationSpace) for ``kernel`` on ``pattern``.

    SpMV:   OUT(i0,i1) = i0, MAT(i0,i1) = row_offsets[i0] + i1,
            VEC(i0,i1) = col_indices[row_offsets[i0] + i1].
    SpTRSV: the same maps restricted to the off-diagonal entries of each row.
    """
    kernel = KernelKind(kernel)
    rp = pattern.row_offsets
    lengths = pattern.row_lengths()
    row_of = np.repeat(np.arange(pattern.n_rows, dtype=np.int64), lengths)
    if kernel is KernelKind.SPMV:
        mat = np.arange(pattern.nnz, dtype=np.int64)
        offsets = rp.copy()
        diag = None
    else:
        check_triangular(pattern)
        diag = rp[1:] - 1
        keep = np.ones(pattern.nnz, dtype=bool)
        keep[diag] = False
        mat = np.flatnonzero(keep).astype(np.int64)
        offsets = rp - np.arange(pattern.n_rows + 1)
    space = IterationSpace(kernel, pattern.n_rows, offsets, diag)
    fns = []
    for role, tab in ((Role.OUT, row_of[mat]), (Role.MAT, mat), (Role.VEC, pattern.col_indices[mat])):
        tab = np.ascontiguousarray(tab, dtype=np.int64)
        tab.setflags(write=False)
        fns.append(AccessFunction(role, space, tab))
    return fns[0], fns[1], fns[2], space


@dataclass(frozen=True)
class Region:
    """A set of rows with an absolute inner range ``[start, stop)`` per row.

    Consecutive entries of ``rows`` are outer neighbours: the i0-difference
    is taken between ``rows[k]`` and ``rows[k+1]`` on the inner indices the
    two rows share.
    """

    rows: tuple[int, ...]
    start: tuple[int, ...]
    stop: tuple[int, ...]

    @classmethod
    def full(cls, space: IterationSpace, rows: Sequence[int]) -> "Region":
        rows = tuple(int(r) for r in rows)
        return cls(rows, (0,) * len(rows), tuple(space.inner_extent(r) for r in rows))

    @classmethod
    def rect(cls, rows: Sequence[int], lo: int, hi: int) -> "Region":
        rows = tuple(int(r) for r in rows)
        return cls(rows, (lo,) * len(rows), (hi,) * len(rows))

    @property
    def n_points(self) -> int:
        return sum(max(0, b - a) for a, b in zip(self.start, self.stop))


def _all_equal(arrays) -> bool:
    first = None
    for a in arrays:
        if a.size == 0:
            continue
        if first is None:
            first = a.flat[0]
        if np.any(a != first):
            return False
    return True


@dataclass(frozen=True, eq=False)
class FopdTable:
    """Forward differences of one access function over a region.

    ``d_inner[k]`` holds Δ_{i1} for row ``rows[k]`` starting at absolute inner
    index ``start[k]``; ``d_outer[k]`` holds Δ_{i0} between ``rows[k]`` and
    ``rows[k+1]`` starting at ``outer_start[k]``. A dimension is strided when
    all of its defined differences are equal (vacuously so when none exist).
    """

    rows: tuple[int, ...]
    start: tuple[int, ...]
    d_inner: tuple[np.ndarray, ...]
    outer_start: tuple[int, ...]
    d_outer: tuple[np.ndarray, ...]

    @property
    def strided_inner(self) -> bool:
        return _all_equal(self.d_inner)

    @property
    def strided_outer(self) -> bool:
        return _all_equal(self.d_outer)

    @property
    def strided(self) -> bool:
        return self.strided_inner and self.strided_outer

    def _slot(self, i0):
        try:
            return self.rows.index(i0)
        except ValueError:
            raise KeyError(f"row {i0} is not in the region") from None

    def inner_at(self, i0: int, i1: int) -> int:
        k = self._slot(i0)
        j = i1 - self.start[k]
        if not 0 <= j < self.d_inner[k].size:
            raise KeyError(f"Δ_i1 undefined at ({i0}, {i1})")
        return int(self.d_inner[k][j])

    def outer_at(self, i0: int, i1: int) -> int:
        k = self._slot(i0)
        if k >= len(self.d_outer):
            raise KeyError(f"Δ_i0 undefined at ({i0}, {i1}): no next row")
        j = i1 - self.outer_start[k]
        if not 0 <= j < self.d_outer[k].size:
            raise KeyError(f"Δ_i0 undefined at ({i0}, {i1})")
        return int(self.d_outer[k][j])


def _fopd_rows(rows, start, values) -> FopdTable:
    d_inner = tuple(np.diff(v) for v in values)
    outer_start, d_outer = [], []
    for k in range(len(values) - 1):
        lo = max(start[k], start[k + 1])
        hi = min(start[k] + values[k].size, start[k + 1] + values[k + 1].size)
        a = values[k][lo - start[k]:max(lo, hi) - start[k]]
        b = values[k + 1][lo - start[k + 1]:max(lo, hi) - start[k + 1]]
        outer_start.append(lo)
        d_outer.append(b - a)
    return FopdTable(tuple(rows), tuple(start), d_inner, tuple(outer_start), tuple(d_outer))


def compute_fopd(fn: AccessFunction, region: Region) -> FopdTable:
    """FOPD tables of ``fn`` on ``region``.

    Raises ValueError for an empty region or one that leaves the domain.
    """
    if region.n_points == 0:
        raise ValueError("empty region")
    values = []
    for r, a, b in zip(region.rows, region.start, region.stop):
        if not (0 <= r < fn.space.n_rows) or a < 0 or b > fn.space.inner_extent(r) or b < a:
            raise ValueError(f"region row {r} [{a}, {b}) is outside the iteration space")
        values.append(fn.row(r)[a:b].astype(np.int64))
    return _fopd_rows(region.rows, region.start, values)


def fopd_of_table(table: np.ndarray) -> FopdTable:
    """FOPDs of a rectangular local index table (rows = outer dimension)."""
    t = np.atleast_2d(np.asarray(table, dtype=np.int64))
    m = t.shape[0]
    return FopdTable(
        tuple(range(m)),
        (0,) * m,
        tuple(np.diff(t, axis=1)),
        (0,) * max(0, m - 1),
        tuple(np.diff(t, axis=0)),
    )


def classify_codelet(out: FopdTable, mat: FopdTable, vec: FopdTable) -> CodeletKind:
    n = sum(f.strided for f in (out, mat, vec))
    return (CodeletKind.NONE, CodeletKind.PSC_II, CodeletKind.PSC_I, CodeletKind.BLAS)[n]


def classify_tables(out, mat, vec) -> CodeletKind:
    return classify_codelet(fopd_of_table(out), fopd_of_table(mat), fopd_of_table(vec))


def dump_region(fns: Sequence[AccessFunction], region: Region) -> str:
    """Text dump of one region: bounds, index tables, FOPDs, classification."""

    def fmt(a):
        return " ".join(str(int(v)) for v in a) if len(a) else "-"

    bounds = ", ".join(f"{r}:[{a},{b})" for r, a, b in zip(region.rows, region.start, region.stop))
    lines = [f"region rows {bounds}"]
    tables = []
    for fn in fns:
        t = compute_fopd(fn, region)
        tables.append(t)
        lines.append(f"  {fn.role.name}")
        for r, a, b, d in zip(region.rows, region.start, region.stop, t.d_inner):
            lines.append(f"    i0={r} index {fmt(fn.row(r)[a:b])} | d_i1 {fmt(d)}")
        for k, d in enumerate(t.d_outer):
            lines.append(f"    i0={region.rows[k]}->{region.rows[k + 1]} d_i0 {fmt(d)}")
        lines.append(
            f"    strided i0={'yes' if t.strided_outer else 'no'} i1={'yes' if t.strided_inner else 'no'}"
        )
    lines.append(f"  class {classify_codelet(*tables).value}")
    return "\n".join(lines) + "\n"
