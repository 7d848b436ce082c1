"""Parametric executor and CSR baselines.

A plan is flattened once into integer arrays and interpreted by three
generic codelet routines behind a kind switch. The same compiled code runs
every plan; only the arrays change with the sparsity pattern.

Each generic codelet has a fast path for the shape the miner emits most
(contiguous row dots, a shared gather, a flattened run) and falls back to a
fully general index computation otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

from .kernel_model import CodeletKind, KernelKind
from .matrix_io import CsrMatrix, check_triangular
from .miner import Codelet, CodeletPlan, Layout

__all__ = [
    "ExecutionContext",
    "PackedPlan",
    "pack_plan",
    "exec_blas_codelet",
    "exec_psci_codelet",
    "exec_pscii_codelet",
    "execute_plan",
    "spmv",
    "sptrsv",
    "spmv_csr_baseline",
    "sptrsv_csr_baseline",
    "effective_workers",
]

_KIND_CODE = {CodeletKind.BLAS: 0, CodeletKind.PSC_I: 1, CodeletKind.PSC_II: 2}
_LAYOUT_CODE = {Layout.STRIDED: 0, Layout.COL: 1, Layout.ROW: 2, Layout.POINT: 3}
_ROW_WIDTH = 12
# codelet-kernel float flags: reductions may be reassociated so dots vectorize
_FASTMATH = {"reassoc", "contract", "nsz"}


@dataclass
class ExecutionContext:
    """Arrays a plan runs against.

    SpMV: ``y[out] += values[mat] * x[vec]`` with ``y`` zeroed beforehand.
    SpTRSV: ``y`` is the per-row accumulator, ``x`` the solution being
    written and ``b`` the right-hand side.
    """

    values: np.ndarray
    x: np.ndarray
    y: np.ndarray
    b: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class PackedPlan:
    """Flat form of a plan.

    ``codelets`` rows are ``[code, m, n, out0, out1, out2, mat0.., vec0..]``
    where ``code = kind | out_layout<<2 | mat_layout<<4 | vec_layout<<6``.
    Per access function the three slots hold ``(base, stride_outer,
    stride_inner)`` when strided, otherwise ``(table_offset, stride_outer,
    stride_inner)`` with any base folded into the table.
    """

    kernel: KernelKind
    n_rows: int
    n_cols: int
    nnz: int
    codelets: np.ndarray
    tables: np.ndarray
    group_ptr: np.ndarray
    part_ptr: np.ndarray
    fin_ptr: np.ndarray
    fin_row: np.ndarray
    fin_diag: np.ndarray
    max_gather: int


def _pack_codelets(codelets, rows: list, tables: list, offset: int) -> int:
    for c in codelets:
        code = _KIND_CODE[c.kind]
        row = [0, c.m, c.n]
        for shift, d in zip((2, 4, 6), c.descriptors):
            code |= _LAYOUT_CODE[d.layout] << shift
            if d.is_strided:
                row += [d.base, d.stride_outer, d.stride_inner]
                continue
            tab = d.table + d.base if d.layout is Layout.COL else d.table
            row += [offset, d.stride_outer, d.stride_inner]
            tables.append(tab)
            offset += tab.size
        row[0] = code
        rows.append(row)
    return offset


def _index_dtype(limit: int):
    return np.int32 if limit < 2**31 - 1 else np.int64


def pack_plan(plan: CodeletPlan) -> PackedPlan:
    rows, tables = [], []
    group_ptr, part_ptr, fin_ptr = [0], [0], [0]
    fin_row, fin_diag = [], []
    offset = 0
    max_gather = 1
    for part in plan.partitions:
        for g in part:
            offset = _pack_codelets(g.codelets, rows, tables, offset)
            max_gather = max([max_gather] + [c.n for c in g.codelets])
            group_ptr.append(len(rows))
            fin_row += [f.row for f in g.finalize]
            fin_diag += [f.diag_index for f in g.finalize]
            fin_ptr.append(len(fin_row))
        part_ptr.append(len(group_ptr) - 1)

    big = max(plan.nnz, plan.n_rows, plan.n_cols, offset) + 1
    flat = np.asarray(rows, dtype=np.int64).reshape(-1, _ROW_WIDTH)
    if flat.size:
        big = max(big, int(np.abs(flat).max()) + 1)
    idx = _index_dtype(big)

    def arr(v):
        return np.asarray(v, dtype=np.int64)

    return PackedPlan(
        plan.kernel, plan.n_rows, plan.n_cols, plan.nnz,
        np.ascontiguousarray(flat, dtype=idx),
        np.concatenate(tables).astype(idx) if tables else np.zeros(1, dtype=idx),
        arr(group_ptr), arr(part_ptr), arr(fin_ptr), arr(fin_row), arr(fin_diag), max_gather,
    )


# --------------------------------------------------------------------------
# compiled codelets
# --------------------------------------------------------------------------

# Codelets are addressed as (cl, k) rather than through row views, and the
# fast paths live directly in the loop body of ``_run_codelets``. Both keep
# reference counting out of the per-codelet path; it costs more than a small
# codelet's arithmetic.

@njit(inline="always")
def _idx(cl, k, r, tab, i, j, n):
    layout = (cl[k, 0] >> (2 + 2 * r)) & 3
    s = 3 + 3 * r
    if layout == 0:
        return cl[k, s] + cl[k, s + 1] * i + cl[k, s + 2] * j
    if layout == 1:
        return tab[cl[k, s] + j] + cl[k, s + 1] * i
    if layout == 2:
        return tab[cl[k, s] + i] + cl[k, s + 2] * j
    return tab[cl[k, s] + i * n + j]


@njit(cache=True)
def _generic_codelet(cl, k, tab, ax, x, y):
    m, n = cl[k, 1], cl[k, 2]
    for i in range(m):
        for j in range(n):
            y[_idx(cl, k, 0, tab, i, j, n)] += ax[_idx(cl, k, 1, tab, i, j, n)] * x[_idx(cl, k, 2, tab, i, j, n)]


@njit(cache=True, fastmath=_FASTMATH)
def _run_codelets(lo, hi, cl, tab, ax, x, y, gather):
    """Run codelets ``lo:hi``; ``gather`` is scratch of length >= max n."""
    for k in range(lo, hi):
        code = cl[k, 0]
        m, n = cl[k, 1], cl[k, 2]
        if code == 0 and cl[k, 5] == 0:
            # BLAS: every access strided, one output per row
            ob, oso = cl[k, 3], cl[k, 4]
            mb, mso, msi = cl[k, 6], cl[k, 7], cl[k, 8]
            vb, vso, vsi = cl[k, 9], cl[k, 10], cl[k, 11]
            for i in range(m):
                mi = mb + mso * i
                vi = vb + vso * i
                acc = 0.0
                if msi == 1 and vsi == 1:
                    for j in range(n):
                        acc += ax[mi + j] * x[vi + j]
                else:
                    for j in range(n):
                        acc += ax[mi + msi * j] * x[vi + vsi * j]
                y[ob + oso * i] += acc
        elif code == 0b01000001 and cl[k, 5] == 0:
            # PSC_I: strided rows and values, one column table for all rows
            ob, oso = cl[k, 3], cl[k, 4]
            mb, mso, msi = cl[k, 6], cl[k, 7], cl[k, 8]
            voff, vso = cl[k, 9], cl[k, 10]
            if vso == 0:
                # gather x once and reuse it for all m rows
                for j in range(n):
                    gather[j] = x[tab[voff + j]]
                for i in range(m):
                    mi = mb + mso * i
                    acc = 0.0
                    if msi == 1:
                        for j in range(n):
                            acc += ax[mi + j] * gather[j]
                    else:
                        for j in range(n):
                            acc += ax[mi + msi * j] * gather[j]
                    y[ob + oso * i] += acc
            else:
                for i in range(m):
                    mi = mb + mso * i
                    vi = vso * i
                    acc = 0.0
                    for j in range(n):
                        acc += ax[mi + msi * j] * x[vi + tab[voff + j]]
                    y[ob + oso * i] += acc
        elif code == 0b01000110 and m == 1:
            # PSC_II: one flattened run, tabulated outputs and gathers
            ooff, mb, msi, voff = cl[k, 3], cl[k, 6], cl[k, 8], cl[k, 9]
            for j in range(n):
                y[tab[ooff + j]] += ax[mb + msi * j] * x[tab[voff + j]]
        else:
            _generic_codelet(cl, k, tab, ax, x, y)


@njit(inline="always")
def _finalize(lo, hi, fin_row, fin_diag, ax, x, y, b):
    for f in range(lo, hi):
        r = fin_row[f]
        x[r] = (b[r] - y[r]) / ax[fin_diag[f]]


# Within a partition no region reads what another region of it writes, so a
# run of consecutive regions can execute all codelets first and then all of
# its finalize records.

@njit(cache=True)
def _run_serial(cl, tab, group_ptr, part_ptr, fin_ptr, fin_row, fin_diag, ax, x, y, b, solve, gather):
    g0 = gather[0]
    for p in range(part_ptr.size - 1):
        lo, hi = part_ptr[p], part_ptr[p + 1]
        _run_codelets(group_ptr[lo], group_ptr[hi], cl, tab, ax, x, y, g0)
        if solve:
            _finalize(fin_ptr[lo], fin_ptr[hi], fin_row, fin_diag, ax, x, y, b)


@njit(parallel=True, cache=True)
def _run_parallel(cl, tab, group_ptr, part_ptr, fin_ptr, fin_row, fin_diag, ax, x, y, b, solve, gather):
    # partitions in order with a barrier between them; inside one, each
    # thread takes a contiguous chunk of regions
    w = gather.shape[0]
    for p in range(part_ptr.size - 1):
        lo, hi = part_ptr[p], part_ptr[p + 1]
        chunks = min(w, hi - lo)
        for q in prange(chunks):
            a = lo + (hi - lo) * q // chunks
            z = lo + (hi - lo) * (q + 1) // chunks
            _run_codelets(group_ptr[a], group_ptr[z], cl, tab, ax, x, y, gather[q])
            if solve:
                _finalize(fin_ptr[a], fin_ptr[z], fin_row, fin_diag, ax, x, y, b)


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------

def effective_workers(workers: int) -> int:
    """Threads actually used: never more than numba's pool (CPU count)."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return min(int(workers), numba.config.NUMBA_NUM_THREADS)


def _run_one(c: Codelet, kind: CodeletKind, ctx: ExecutionContext) -> None:
    if c.kind is not kind:
        raise ValueError(f"expected a {kind.value} codelet, got {c.kind.value}")
    rows, tables = [], []
    _pack_codelets([c], rows, tables, 0)
    tab = np.concatenate(tables).astype(np.int64) if tables else np.zeros(1, dtype=np.int64)
    _run_codelets(0, 1, np.asarray(rows, dtype=np.int64).reshape(1, _ROW_WIDTH), tab, ctx.values, ctx.x, ctx.y,
                  np.empty(max(1, c.n)))


def exec_blas_codelet(c: Codelet, ctx: ExecutionContext) -> None:
    _run_one(c, CodeletKind.BLAS, ctx)


def exec_psci_codelet(c: Codelet, ctx: ExecutionContext) -> None:
    _run_one(c, CodeletKind.PSC_I, ctx)


def exec_pscii_codelet(c: Codelet, ctx: ExecutionContext) -> None:
    _run_one(c, CodeletKind.PSC_II, ctx)


def _f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def execute_plan(plan: CodeletPlan | PackedPlan, ctx: ExecutionContext, workers: int = 1) -> None:
    """Run ``plan`` against ``ctx`` in place.

    Partitions run in order. Region groups inside a partition run on up to
    ``workers`` threads; each group's codelets, then its finalize records,
    run sequentially on one thread.
    """
    pp = plan if isinstance(plan, PackedPlan) else pack_plan(plan)
    solve = pp.kernel is KernelKind.SPTRSV
    if ctx.values.shape != (pp.nnz,):
        raise ValueError("values length does not match the plan's matrix")
    if ctx.y.shape != (pp.n_rows,):
        raise ValueError("output vector length does not match the plan's matrix")
    if ctx.x.shape != ((pp.n_rows,) if solve else (pp.n_cols,)):
        raise ValueError("x length does not match the plan's matrix")
    b = ctx.b if solve else ctx.y
    if solve and (b is None or b.shape != (pp.n_rows,)):
        raise ValueError("SpTRSV needs a right-hand side of length n_rows")
    w = effective_workers(workers)
    gather = np.empty((w, pp.max_gather))
    args = (pp.codelets, pp.tables, pp.group_ptr, pp.part_ptr, pp.fin_ptr, pp.fin_row, pp.fin_diag,
            ctx.values, ctx.x, ctx.y, b, solve, gather)
    if w == 1:
        _run_serial(*args)
    else:
        numba.set_num_threads(w)
        _run_parallel(*args)


def spmv(plan: CodeletPlan | PackedPlan, a: CsrMatrix, x, workers: int = 1) -> np.ndarray:
    y = np.zeros(a.n_rows)
    execute_plan(plan, ExecutionContext(a.values, _f64(x), y), workers)
    return y


def sptrsv(plan: CodeletPlan | PackedPlan, l: CsrMatrix, b, workers: int = 1) -> np.ndarray:
    x = np.zeros(l.n_rows)
    execute_plan(plan, ExecutionContext(l.values, x, np.zeros(l.n_rows), _f64(b)), workers)
    return x


@njit(cache=True)
def _spmv_csr(rp, ci, vx, x, y):
    for i in range(rp.size - 1):
        acc = 0.0
        for k in range(rp[i], rp[i + 1]):
            acc += vx[k] * x[ci[k]]
        y[i] = acc


@njit(cache=True)
def _sptrsv_csr(rp, ci, vx, b, x):
    for i in range(rp.size - 1):
        acc = b[i]
        last = rp[i + 1] - 1
        for k in range(rp[i], last):
            acc -= vx[k] * x[ci[k]]
        x[i] = acc / vx[last]


def spmv_csr_baseline(a: CsrMatrix, x) -> np.ndarray:
    x = _f64(x)
    if x.shape != (a.n_cols,):
        raise ValueError(f"x has shape {x.shape}, expected ({a.n_cols},)")
    y = np.empty(a.n_rows)
    _spmv_csr(a.row_offsets, a.col_indices, a.values, x, y)
    return y


def sptrsv_csr_baseline(l: CsrMatrix, b) -> np.ndarray:
    """Row-wise forward substitution; the diagonal is the last entry of each row."""
    check_triangular(l)
    b = _f64(b)
    if b.shape != (l.n_rows,):
        raise ValueError(f"b has shape {b.shape}, expected ({l.n_rows},)")
    x = np.empty(l.n_rows)
    _sptrsv_csr(l.row_offsets, l.col_indices, l.values, b, x)
    return x
