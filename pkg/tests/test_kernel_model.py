from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import gather3_pattern
from psc.kernel_model import (
    CodeletKind,
    KernelKind,
    Region,
    Role,
    classify_codelet,
    classify_tables,
    compute_access_functions,
    compute_fopd,
    dump_region,
    fopd_of_table,
)
from psc.matrix_io import TriangularError, from_dense, generate_pattern

GOLDEN = Path(__file__).parent / "golden"


def test_spmv_gather3_tables():
    out, mat, vec, space = compute_access_functions("spmv", gather3_pattern())
    for i0 in range(3):
        assert [vec.index_at(i0, j) for j in range(3)] == [0, 2, 5]
        assert [mat.index_at(i0, j) for j in range(3)] == [3 * i0 + j for j in range(3)]
        assert [out.index_at(i0, j) for j in range(3)] == [i0] * 3
    assert out.role is Role.OUT and mat.role is Role.MAT and vec.role is Role.VEC


def test_spmv_identity():
    out, mat, vec, space = compute_access_functions(KernelKind.SPMV, from_dense(np.eye(3)))
    assert space.inner_extents.tolist() == [1, 1, 1]
    for fn in (out, mat, vec):
        assert fn.table.tolist() == [0, 1, 2]


def test_sptrsv_bidiagonal():
    l4 = generate_pattern("banded", n=4, bandwidth=1)
    out, mat, vec, space = compute_access_functions("sptrsv", l4)
    assert space.inner_extents.tolist() == [0, 1, 1, 1]
    assert [vec.index_at(i, 0) for i in (1, 2, 3)] == [0, 1, 2]
    # diagonal positions in the CSR value array
    assert space.diag_index.tolist() == [0, 2, 4, 6]
    assert not set(mat.table.tolist()) & set(space.diag_index.tolist())
    with pytest.raises(IndexError):
        space.point(0, 0)


def test_sptrsv_needs_triangular():
    with pytest.raises(TriangularError):
        compute_access_functions("sptrsv", from_dense([[1, 1], [0, 1]]))


def test_gather3_fopd_values():
    out, mat, vec, space = compute_access_functions("spmv", gather3_pattern())
    region = Region.full(space, [0, 1, 2])
    g = compute_fopd(mat, region)
    h = compute_fopd(vec, region)
    assert g.inner_at(0, 0) == 1 and g.inner_at(0, 1) == 1
    assert g.outer_at(0, 0) == 3 and g.outer_at(1, 0) == 3
    assert g.strided
    assert h.inner_at(1, 1) == 3 and h.inner_at(1, 0) == 2
    assert not h.strided_inner and h.strided_outer
    assert classify_codelet(compute_fopd(out, region), g, h) is CodeletKind.PSC_I


def test_shifted_gather_is_psc_i():
    # h = i0 + s[i1]
    out, mat, vec, space = compute_access_functions("spmv", gather3_pattern(shift=1))
    region = Region.full(space, [0, 1, 2])
    h = compute_fopd(vec, region)
    assert h.inner_at(1, 1) == 3 and h.outer_at(0, 2) == 1
    assert classify_codelet(*(compute_fopd(f, region) for f in (out, mat, vec))) is CodeletKind.PSC_I


def test_constant_function_has_zero_fopds():
    f = fopd_of_table(np.full((3, 4), 7))
    assert all(np.all(d == 0) for d in f.d_inner + f.d_outer)
    assert f.strided


def test_dense_block_region_is_blas():
    out, mat, vec, space = compute_access_functions("spmv", generate_pattern("dense_block", size=3))
    region = Region.full(space, [0, 1, 2])
    assert classify_codelet(*(compute_fopd(f, region) for f in (out, mat, vec))) is CodeletKind.BLAS


def test_single_row_ragged_pair_and_flattened_run():
    a = from_dense([[1, 0, 1, 0, 0, 0], [1, 1, 0, 0, 1, 0]])
    out, mat, vec, space = compute_access_functions("spmv", a)
    one = Region.full(space, [1])
    assert classify_codelet(*(compute_fopd(f, one) for f in (out, mat, vec))) is CodeletKind.PSC_I
    # rows of lengths 2 and 3: on the overlap MAT steps by 2 between rows, so
    # only VEC is non-strided
    both = Region.full(space, [0, 1])
    tabs = [compute_fopd(f, both) for f in (out, mat, vec)]
    assert tabs[1].d_outer[0].tolist() == [2, 2]
    assert classify_codelet(*tabs) is CodeletKind.PSC_I
    a2 = from_dense([[1, 0, 0, 1, 0, 0], [1, 1, 0, 0, 1, 0]])
    out, mat, vec, space = compute_access_functions("spmv", a2)
    tabs = [compute_fopd(f, Region.full(space, [0, 1])) for f in (out, mat, vec)]
    assert classify_codelet(*tabs) is CodeletKind.PSC_I
    # flattening both rows into one run leaves only MAT strided
    flat = [np.concatenate([f.row(0), f.row(1)])[None, :] for f in (out, mat, vec)]
    assert classify_tables(*flat) is CodeletKind.PSC_II


def test_compute_fopd_errors():
    out, mat, vec, space = compute_access_functions("spmv", gather3_pattern())
    with pytest.raises(ValueError):
        compute_fopd(vec, Region.rect([0], 1, 1))
    with pytest.raises(ValueError):
        compute_fopd(vec, Region.rect([0], 0, 4))
    with pytest.raises(ValueError):
        compute_fopd(vec, Region.rect([5], 0, 1))
    f = compute_fopd(vec, Region.full(space, [0, 1]))
    with pytest.raises(KeyError):
        f.outer_at(1, 0)
    with pytest.raises(KeyError):
        f.inner_at(0, 2)


def test_dump_region_golden():
    out, mat, vec, space = compute_access_functions("spmv", gather3_pattern())
    text = dump_region((out, mat, vec), Region.full(space, [0, 1, 2]))
    assert text == (GOLDEN / "gather3_region.txt").read_text()


# ---------------------------------------------------------------- properties

@st.composite
def patterns(draw):
    n_rows = draw(st.integers(1, 7))
    n_cols = draw(st.integers(1, 9))
    mask = draw(st.lists(st.lists(st.booleans(), min_size=n_cols, max_size=n_cols),
                         min_size=n_rows, max_size=n_rows))
    return from_dense(np.array(mask, dtype=float))


@st.composite
def pattern_and_region(draw):
    a = draw(patterns())
    out, mat, vec, space = compute_access_functions("spmv", a)
    rows = [r for r in range(a.n_rows) if space.inner_extent(r) > 0]
    if not rows:
        return a, None
    k0 = draw(st.integers(0, len(rows) - 1))
    k1 = draw(st.integers(k0 + 1, len(rows)))
    chosen = rows[k0:k1]
    width = min(space.inner_extent(r) for r in chosen)
    lo = draw(st.integers(0, width - 1))
    hi = draw(st.integers(lo + 1, width))
    return a, Region.rect(chosen, lo, hi)


@given(patterns())
def test_mat_strided_on_every_single_row(a):
    out, mat, vec, space = compute_access_functions("spmv", a)
    for r in range(a.n_rows):
        if space.inner_extent(r):
            f = compute_fopd(mat, Region.full(space, [r]))
            assert f.strided_inner and np.all(f.d_inner[0] == 1)


@given(pattern_and_region())
def test_spmv_out_strided_on_rectangles(case):
    a, region = case
    # skipping an empty row breaks the unit step of OUT
    if region is None or np.any(np.diff(region.rows) != 1):
        return
    out, _, _, _ = compute_access_functions("spmv", a)
    assert compute_fopd(out, region).strided


@given(pattern_and_region())
def test_fopd_matches_brute_force(case):
    a, region = case
    if region is None:
        return
    for fn in compute_access_functions("spmv", a)[:3]:
        t = compute_fopd(fn, region)
        for k, r in enumerate(region.rows):
            for i1 in range(region.start[k], region.stop[k] - 1):
                assert t.inner_at(r, i1) == fn.index_at(r, i1 + 1) - fn.index_at(r, i1)
            if k + 1 < len(region.rows):
                nxt = region.rows[k + 1]
                for i1 in range(region.start[k], region.stop[k]):
                    assert t.outer_at(r, i1) == fn.index_at(nxt, i1) - fn.index_at(r, i1)


def _affine(table):
    """Brute force: is table[i, j] == a*i + b*j + c everywhere?"""
    m, n = table.shape
    c = table[0, 0]
    a = table[1, 0] - c if m > 1 else 0
    b = table[0, 1] - c if n > 1 else 0
    i, j = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    return bool(np.all(table == a * i + b * j + c))


@given(pattern_and_region())
def test_blas_iff_all_affine(case):
    a, region = case
    if region is None:
        return
    fns = compute_access_functions("spmv", a)[:3]
    tabs = [np.array([fn.row(r)[region.start[0]:region.stop[0]] for r in region.rows]) for fn in fns]
    kind = classify_codelet(*(compute_fopd(fn, region) for fn in fns))
    assert (kind is CodeletKind.BLAS) == all(_affine(t) for t in tabs)
    n_affine = sum(_affine(t) for t in tabs)
    assert kind is [CodeletKind.NONE, CodeletKind.PSC_II, CodeletKind.PSC_I, CodeletKind.BLAS][n_affine]
