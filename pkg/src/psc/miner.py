"""Codelet mining: windowed regions, three greedy strategies and the
load-counting cost model used to pick between them.

A codelet is an ``m x n`` rectangle of iteration points (``m`` outer,
``n`` inner). Each of its three access functions is described either by
strides (``base + stride_outer*i + stride_inner*j``) or by an offset table.
The codelet's kind is never chosen by hand: it is the FOPD classification
of its own index tables, and descriptors are strided exactly where the
tables are.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .kernel_model import (
    AccessFunction,
    CodeletKind,
    KernelKind,
    Region,
    compute_access_functions,
    compute_fopd,
    FopdTable,
)
from .matrix_io import CsrMatrix
from .scheduler import find_dependencies, partition_iteration_space

__all__ = [
    "N_ACCESS_FUNCTIONS",
    "Layout",
    "Descriptor",
    "Codelet",
    "CostModelResult",
    "FinalizeRecord",
    "RegionPlan",
    "CodeletPlan",
    "PartitionFopds",
    "codelet_cost",
    "plan_cost",
    "get_consecutive_iterations",
    "compute_partition_fopds",
    "blas_first",
    "psci_first",
    "pscii_first",
    "STRATEGIES",
    "inspect",
    "coverage_violations",
    "plan_to_dict",
    "plan_from_dict",
]

# OUT, MAT, VEC for both kernels
N_ACCESS_FUNCTIONS = 3


class Layout(str, enum.Enum):
    STRIDED = "strided"
    COL = "col"      # base + stride_outer*i + table[j], table length n
    ROW = "row"      # table[i] + stride_inner*j, table length m
    POINT = "point"  # table[i*n + j], table length m*n


@dataclass(frozen=True, eq=False)
class Descriptor:
    layout: Layout
    base: int = 0
    stride_outer: int = 0
    stride_inner: int = 0
    table: np.ndarray | None = None

    @property
    def is_strided(self) -> bool:
        return self.layout is Layout.STRIDED

    def indices(self, m: int, n: int) -> np.ndarray:
        i = np.arange(m)[:, None]
        j = np.arange(n)[None, :]
        if self.layout is Layout.STRIDED:
            return self.base + self.stride_outer * i + self.stride_inner * j
        if self.layout is Layout.COL:
            return self.base + self.stride_outer * i + self.table[None, :n]
        if self.layout is Layout.ROW:
            return self.table[:m, None] + self.stride_inner * j
        return self.table.reshape(m, n)

    def loads(self, dims: int) -> int:
        """Integers loaded before the codelet runs: one stride per codelet
        dimension, or the whole offset table."""
        return dims if self.is_strided else int(self.table.size)

    @classmethod
    def from_table(cls, t: np.ndarray) -> "Descriptor":
        m, n = t.shape
        d_in = np.diff(t, axis=1)
        d_out = np.diff(t, axis=0)
        inner_ok = d_in.size == 0 or bool(np.all(d_in == d_in.flat[0]))
        outer_ok = d_out.size == 0 or bool(np.all(d_out == d_out.flat[0]))
        so = int(d_out.flat[0]) if m > 1 else 0
        si = int(d_in.flat[0]) if n > 1 else 0
        base = int(t[0, 0])
        if inner_ok and outer_ok:
            return cls(Layout.STRIDED, base, so, si)
        if outer_ok:
            return cls(Layout.COL, base, so, 0, _frozen(t[0] - base))
        if inner_ok:
            return cls(Layout.ROW, 0, 0, si, _frozen(t[:, 0]))
        return cls(Layout.POINT, table=_frozen(t.ravel()))

    def to_dict(self) -> dict:
        d = {"layout": self.layout.value, "base": self.base,
             "stride_outer": self.stride_outer, "stride_inner": self.stride_inner}
        if self.table is not None:
            d["table"] = self.table.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Descriptor":
        tab = d.get("table")
        return cls(Layout(d["layout"]), int(d["base"]), int(d["stride_outer"]), int(d["stride_inner"]),
                   None if tab is None else _frozen(np.asarray(tab, dtype=np.int64)))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.int64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Codelet:
    kind: CodeletKind
    m: int
    n: int
    out: Descriptor
    mat: Descriptor
    vec: Descriptor

    def __post_init__(self):
        n_tables = sum(not d.is_strided for d in self.descriptors)
        expected = {CodeletKind.BLAS: 0, CodeletKind.PSC_I: 1, CodeletKind.PSC_II: 2}
        if self.kind not in expected:
            raise ValueError(f"{self.kind} is not an executable codelet kind")
        if n_tables != expected[self.kind]:
            raise ValueError(f"{self.kind.value} codelet must have {expected[self.kind]} offset tables, has {n_tables}")
        if self.m < 1 or self.n < 1:
            raise ValueError("codelet extents must be positive")

    @property
    def descriptors(self) -> tuple[Descriptor, Descriptor, Descriptor]:
        return self.out, self.mat, self.vec

    @property
    def ops(self) -> int:
        return self.m * self.n

    @property
    def dims(self) -> int:
        return max(1, int(self.m > 1) + int(self.n > 1))

    def tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(d.indices(self.m, self.n) for d in self.descriptors)

    @classmethod
    def from_tables(cls, out, mat, vec) -> "Codelet":
        out, mat, vec = (np.atleast_2d(np.asarray(t, dtype=np.int64)) for t in (out, mat, vec))
        descs = [Descriptor.from_table(t) for t in (out, mat, vec)]
        # same test as classify_tables: strided iff both FOPDs are constant
        kind = (CodeletKind.NONE, CodeletKind.PSC_II, CodeletKind.PSC_I,
                CodeletKind.BLAS)[sum(d.is_strided for d in descs)]
        if kind is CodeletKind.NONE:
            raise ValueError("region has no strided access function; not a codelet")
        m, n = out.shape
        return cls(kind, m, n, *descs)

    def to_dict(self) -> dict:
        c = codelet_cost(self)
        return {"kind": self.kind.value, "m": self.m, "n": self.n,
                "out": self.out.to_dict(), "mat": self.mat.to_dict(), "vec": self.vec.to_dict(),
                "cost": c.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Codelet":
        return cls(CodeletKind(d["kind"]), int(d["m"]), int(d["n"]),
                   Descriptor.from_dict(d["out"]), Descriptor.from_dict(d["mat"]), Descriptor.from_dict(d["vec"]))


@dataclass(frozen=True)
class CostModelResult:
    ops: int
    n_access_functions: int
    loads: tuple[int, ...]

    @property
    def cost(self) -> int:
        return self.ops + self.n_access_functions + sum(self.loads)

    def to_dict(self) -> dict:
        return {"ops": self.ops, "access_functions": self.n_access_functions,
                "loads": list(self.loads), "cost": self.cost}


def codelet_cost(c: Codelet) -> CostModelResult:
    """Operations + access functions + integers loaded per access function."""
    return CostModelResult(c.ops, N_ACCESS_FUNCTIONS, tuple(d.loads(c.dims) for d in c.descriptors))


def plan_cost(codelets: Iterable[Codelet]) -> int:
    return sum(codelet_cost(c).cost for c in codelets)


# --------------------------------------------------------------------------
# Regions
# --------------------------------------------------------------------------

def get_consecutive_iterations(partition: Sequence[int], t: int) -> list[tuple[int, ...]]:
    """Windows of at most ``t`` consecutive rows of the partition, in order."""
    if t < 1:
        raise ValueError("window size t must be >= 1")
    rows = tuple(int(r) for r in partition)
    return [rows[k:k + t] for k in range(0, len(rows), t)]


@dataclass(frozen=True, eq=False)
class PartitionFopds:
    """Access functions plus their FOPD tables over one partition."""

    out: AccessFunction
    mat: AccessFunction
    vec: AccessFunction
    tables: tuple[FopdTable, FopdTable, FopdTable] | None = None
    slot: dict = field(default_factory=dict)

    def vec_steps(self, row: int) -> np.ndarray:
        if self.tables is not None and row in self.slot:
            return self.tables[2].d_inner[self.slot[row]]
        return np.diff(self.vec.row(row))


def compute_partition_fopds(partition: Sequence[int], out, mat, vec) -> PartitionFopds:
    region = Region.full(out.space, partition)
    if region.n_points == 0:
        return PartitionFopds(out, mat, vec)
    tables = tuple(compute_fopd(f, region) for f in (out, mat, vec))
    return PartitionFopds(out, mat, vec, tables, {r: k for k, r in enumerate(region.rows)})


class _Cover:
    """Uncovered-point bookkeeping for one region during a strategy."""

    def __init__(self, rows: Sequence[int], fopds: PartitionFopds):
        self.rows = tuple(rows)
        self.f = fopds
        po = fopds.out.space.point_offsets
        self.start = {r: int(po[r]) for r in self.rows}
        self.free = {r: np.ones(int(po[r + 1] - po[r]), dtype=bool) for r in self.rows}
        self.codelets: list[Codelet] = []

    def emit(self, rows_and_starts: list[tuple[int, int]], n: int) -> Codelet:
        pts = np.array([[self.start[r] + a + j for j in range(n)] for r, a in rows_and_starts])
        c = Codelet.from_tables(self.f.out.table[pts], self.f.mat.table[pts], self.f.vec.table[pts])
        for r, a in rows_and_starts:
            self.free[r][a:a + n] = False
        self.codelets.append(c)
        return c

    def emit_flat(self, pieces: list[tuple[int, int, int]]) -> Codelet:
        pts = np.concatenate([np.arange(self.start[r] + a, self.start[r] + b) for r, a, b in pieces])[None, :]
        c = Codelet.from_tables(self.f.out.table[pts], self.f.mat.table[pts], self.f.vec.table[pts])
        for r, a, b in pieces:
            self.free[r][a:b] = False
        self.codelets.append(c)
        return c

    def segments(self, r: int) -> list[tuple[int, int]]:
        """Maximal runs of uncovered in-row positions, ``[a, b)``."""
        free = self.free[r]
        if not free.any():
            return []
        edges = np.diff(np.concatenate(([0], free.astype(np.int8), [0])))
        return list(zip(np.flatnonzero(edges == 1).tolist(), np.flatnonzero(edges == -1).tolist()))

    def at(self, fn: AccessFunction, r: int, a: int) -> int:
        return int(fn.table[self.start[r] + a])

    def step(self, r0, a0, r1, a1) -> tuple[int, int, int]:
        f = self.f
        return tuple(self.at(fn, r1, a1) - self.at(fn, r0, a0) for fn in (f.out, f.mat, f.vec))

    def find_col(self, r: int, col: int) -> int | None:
        cols = self.f.vec.row(r)
        k = int(np.searchsorted(cols, col))
        return k if k < cols.size and cols[k] == col else None

    def total(self) -> int:
        return plan_cost(self.codelets)


def _extend_down(cv: _Cover, k: int, r: int, a: int, n: int, accept: Callable[[int, int], bool]):
    """Grow a rectangle from ``(r, a)`` of width ``n`` over the following
    rows of the region while the row-to-row step of all three access
    functions stays constant. Candidate starts in the next row are the same
    column, then the same in-row position, then the column the established
    step predicts."""
    placed = [(r, a)]
    step = None
    vec = cv.f.vec
    for r2 in cv.rows[k + 1:]:
        pr, pa = placed[-1]
        if step is None:
            cands = [cv.find_col(r2, cv.at(vec, pr, pa)), a]
        else:
            cands = [cv.find_col(r2, cv.at(vec, pr, pa) + step[2])]
        hit = None
        for a2 in cands:
            if a2 is None or a2 < 0 or a2 + n > cv.free[r2].size or not cv.free[r2][a2:a2 + n].all():
                continue
            s = cv.step(pr, pa, r2, a2)
            if step is not None and s != step:
                continue
            if accept(r2, a2):
                hit, step = a2, s
                break
        if hit is None:
            break
        placed.append((r2, hit))
    return placed


def _blas_pass(cv: _Cover) -> None:
    for k, r in enumerate(cv.rows):
        steps = cv.f.vec_steps(r)
        j = 0
        free = cv.free[r]
        while j < free.size:
            if not free[j]:
                j += 1
                continue
            e = j + 1
            while e < free.size and free[e] and steps[e - 1] == 1:
                e += 1
            n = e - j
            if n >= 2:
                def unit_run(r2, a2, n=n):
                    return bool(np.all(cv.f.vec_steps(r2)[a2:a2 + n - 1] == 1))
                cv.emit(_extend_down(cv, k, r, j, n, unit_run), n)
            j = e


def _psci_pass(cv: _Cover) -> None:
    vec = cv.f.vec
    for k, r in enumerate(cv.rows):
        for a, b in cv.segments(r):
            n = b - a
            rel = vec.row(r)[a:b] - vec.row(r)[a]

            def same_gather(r2, a2, n=n, rel=rel):
                cols = vec.row(r2)[a2:a2 + n]
                return bool(np.array_equal(cols - cols[0], rel))
            cv.emit(_extend_down(cv, k, r, a, n, same_gather), n)


def _pscii_pass(cv: _Cover) -> None:
    mat = cv.f.mat
    runs: list[list[tuple[int, int, int]]] = []
    last = None
    for r in cv.rows:
        for a, b in cv.segments(r):
            if last is not None and cv.at(mat, r, a) == last + 1 and runs[-1][-1][0] != r:
                runs[-1].append((r, a, b))
            else:
                runs.append([(r, a, b)])
            last = cv.at(mat, r, b - 1)
    for pieces in runs:
        if len({p[0] for p in pieces}) >= 2:
            cv.emit_flat(pieces)


def blas_first(r: Sequence[int], fopds: PartitionFopds) -> tuple[list[Codelet], int]:
    """Rectangles of unit-stride column runs first, then ``psci_first`` on
    whatever is left."""
    cv = _Cover(r, fopds)
    _blas_pass(cv)
    _psci_pass(cv)
    return cv.codelets, cv.total()


def psci_first(r: Sequence[int], fopds: PartitionFopds) -> tuple[list[Codelet], int]:
    """Row segments fused down the region while they share one relative
    gather table; unmatched segments become one-row codelets."""
    cv = _Cover(r, fopds)
    _psci_pass(cv)
    return cv.codelets, cv.total()


def pscii_first(r: Sequence[int], fopds: PartitionFopds) -> tuple[list[Codelet], int]:
    """Rows whose entries are adjacent in matrix storage are flattened into
    single one-dimensional codelets; the rest goes through ``psci_first``."""
    cv = _Cover(r, fopds)
    _pscii_pass(cv)
    _psci_pass(cv)
    return cv.codelets, cv.total()


# tie-break order: earlier wins
STRATEGIES: dict[str, Callable] = {
    "blas_first": blas_first,
    "psci_first": psci_first,
    "pscii_first": pscii_first,
}


# --------------------------------------------------------------------------
# Plan
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FinalizeRecord:
    row: int
    diag_index: int
    rhs_index: int


@dataclass(frozen=True, eq=False)
class RegionPlan:
    rows: tuple[int, ...]
    codelets: tuple[Codelet, ...]
    strategy: str
    costs: dict
    finalize: tuple[FinalizeRecord, ...] = ()

    @property
    def cost(self) -> int:
        return plan_cost(self.codelets)


@dataclass(frozen=True, eq=False)
class CodeletPlan:
    kernel: KernelKind
    n_rows: int
    n_cols: int
    nnz: int
    t: int
    partitions: tuple[tuple[RegionPlan, ...], ...]

    def regions(self) -> Iterable[RegionPlan]:
        for p in self.partitions:
            yield from p

    def codelets(self) -> Iterable[Codelet]:
        for g in self.regions():
            yield from g.codelets

    def finalize_records(self) -> list[FinalizeRecord]:
        return [f for g in self.regions() for f in g.finalize]

    @property
    def cost(self) -> int:
        return plan_cost(self.codelets())

    @property
    def n_ops(self) -> int:
        return sum(c.ops for c in self.codelets())

    def breakdown(self) -> dict[str, float]:
        """Fraction of operations handled by each codelet kind."""
        counts = {k: 0 for k in ("BLAS", "PSC_I", "PSC_II")}
        for c in self.codelets():
            counts[c.kind.value] += c.ops
        total = sum(counts.values())
        if total == 0:
            return {k: 0.0 for k in counts}
        return {k: v / total for k, v in counts.items()}

    def kind_counts(self) -> dict[str, int]:
        counts = {k: 0 for k in ("BLAS", "PSC_I", "PSC_II")}
        for c in self.codelets():
            counts[c.kind.value] += 1
        return counts


def _select(results: dict[str, tuple[list[Codelet], int]]) -> str:
    best = None
    for name in STRATEGIES:
        if best is None or results[name][1] < results[best][1]:
            best = name
    return best


def inspect(kernel: KernelKind | str, pattern: CsrMatrix, t: int = 3, target_groups: int = 1) -> CodeletPlan:
    """Mine a codelet plan: partition rows, window each partition into
    ``t``-row regions, run all three strategies per region and keep the
    cheapest (ties favour BLAS, then PSC I)."""
    kernel = KernelKind(kernel)
    out, mat, vec, space = compute_access_functions(kernel, pattern)
    g = find_dependencies(kernel, pattern)
    schedule = partition_iteration_space(g, pattern, target_groups)
    parts = []
    for p in schedule.partitions:
        fopds = compute_partition_fopds(p, out, mat, vec)
        groups = []
        for r in get_consecutive_iterations(p, t):
            results = {name: s(r, fopds) for name, s in STRATEGIES.items()}
            best = _select(results)
            fin = ()
            if kernel is KernelKind.SPTRSV:
                fin = tuple(FinalizeRecord(row, int(space.diag_index[row]), row) for row in r)
            groups.append(RegionPlan(r, tuple(results[best][0]), best,
                                     {k: v[1] for k, v in results.items()}, fin))
        parts.append(tuple(groups))
    return CodeletPlan(kernel, pattern.n_rows, pattern.n_cols, pattern.nnz, t, tuple(parts))


def coverage_violations(plan: CodeletPlan, pattern: CsrMatrix) -> int:
    """Kernel operations covered zero or several times, plus stray
    operations and codelets reaching outside their region's rows."""
    out, mat, vec, _ = compute_access_functions(plan.kernel, pattern)
    expected = np.zeros(pattern.nnz, dtype=np.int64)
    expected[mat.table] = 1
    row_of_mat = np.full(pattern.nnz, -1, dtype=np.int64)
    row_of_mat[mat.table] = out.table
    col_of_mat = np.full(pattern.nnz, -1, dtype=np.int64)
    col_of_mat[mat.table] = vec.table
    seen = np.zeros(pattern.nnz, dtype=np.int64)
    bad = 0
    for g in plan.regions():
        rows = set(g.rows)
        for c in g.codelets:
            o, m, v = (x.ravel() for x in c.tables())
            if m.min() < 0 or m.max() >= pattern.nnz:
                bad += m.size
                continue
            np.add.at(seen, m, 1)
            bad += int(np.sum(row_of_mat[m] != o)) + int(np.sum(col_of_mat[m] != v))
            bad += sum(1 for x in set(o.tolist()) if x not in rows)
    return bad + int(np.sum(seen != expected))


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------

def plan_to_dict(plan: CodeletPlan) -> dict:
    return {
        "kernel": plan.kernel.value,
        "n_rows": plan.n_rows,
        "n_cols": plan.n_cols,
        "nnz": plan.nnz,
        "t": plan.t,
        "cost": plan.cost,
        "breakdown": plan.breakdown(),
        "partitions": [
            [
                {
                    "rows": list(g.rows),
                    "strategy": g.strategy,
                    "strategy_costs": dict(g.costs),
                    "codelets": [c.to_dict() for c in g.codelets],
                    "finalize": [[f.row, f.diag_index, f.rhs_index] for f in g.finalize],
                }
                for g in part
            ]
            for part in plan.partitions
        ],
    }


def plan_from_dict(d: dict) -> CodeletPlan:
    parts = []
    for part in d["partitions"]:
        parts.append(tuple(
            RegionPlan(tuple(g["rows"]), tuple(Codelet.from_dict(c) for c in g["codelets"]),
                       g["strategy"], dict(g["strategy_costs"]),
                       tuple(FinalizeRecord(*f) for f in g["finalize"]))
            for g in part))
    return CodeletPlan(KernelKind(d["kernel"]), d["n_rows"], d["n_cols"], d["nnz"], d["t"], tuple(parts))
