import dataclasses

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given
from hypothesis import strategies as st

from conftest import gather3_pattern, m_matrix, random_square, unit_lower
from psc.executor import (
    ExecutionContext,
    effective_workers,
    exec_blas_codelet,
    exec_psci_codelet,
    exec_pscii_codelet,
    execute_plan,
    pack_plan,
    spmv,
    spmv_csr_baseline,
    sptrsv,
    sptrsv_csr_baseline,
)
from psc.kernel_model import CodeletKind
from psc.matrix_io import from_dense, generate_pattern
from psc.miner import Codelet, Descriptor, Layout, inspect


def _scipy(a):
    return sp.csr_matrix((a.values, a.col_indices, a.row_offsets), shape=a.shape)


def _only(plan):
    (c,) = plan.codelets()
    return c


# ---------------------------------------------------------------- codelets

def test_blas_codelet_dense_block():
    a = generate_pattern("dense_block", size=3).with_values(np.arange(1.0, 10.0))
    c = _only(inspect("spmv", a))
    assert c.kind is CodeletKind.BLAS
    y = np.zeros(3)
    exec_blas_codelet(c, ExecutionContext(a.values, np.ones(3), y))
    assert y.tolist() == [6.0, 15.0, 24.0]


def test_blas_codelet_single_point_and_zero_x():
    c = Codelet.from_tables([[1]], [[0]], [[2]])
    y = np.array([0.0, 1.0])
    exec_blas_codelet(c, ExecutionContext(np.array([3.0]), np.array([0, 0, 2.0]), y))
    assert y.tolist() == [0.0, 7.0]
    a = generate_pattern("dense_block", size=3).with_values(np.arange(1.0, 10.0))
    y = np.array([1.0, 2.0, 3.0])
    exec_blas_codelet(_only(inspect("spmv", a)), ExecutionContext(a.values, np.zeros(3), y))
    assert y.tolist() == [1.0, 2.0, 3.0]


def test_psci_codelet_gather3():
    a = gather3_pattern().with_values(np.arange(1.0, 10.0))
    c = _only(inspect("spmv", a))
    assert c.kind is CodeletKind.PSC_I
    x = np.zeros(6)
    x[[0, 2, 5]] = 1.0
    y = np.zeros(3)
    exec_psci_codelet(c, ExecutionContext(a.values, x, y))
    assert y.tolist() == [6.0, 15.0, 24.0]


def test_pscii_codelet_single_row():
    c = Codelet(CodeletKind.PSC_II, 1, 2,
                Descriptor(Layout.COL, 0, 0, 0, np.array([0, 0])),
                Descriptor(Layout.STRIDED, 0, 0, 1),
                Descriptor(Layout.COL, 0, 0, 0, np.array([1, 3])))
    y = np.array([1.0])
    exec_pscii_codelet(c, ExecutionContext(np.array([2.0, 5.0]), np.array([0.0, 1.0, 0.0, 1.0]), y))
    assert y.tolist() == [8.0]


def test_codelet_kind_checked():
    c = Codelet.from_tables([[0]], [[0]], [[0]])
    with pytest.raises(ValueError):
        exec_psci_codelet(c, ExecutionContext(np.ones(1), np.ones(1), np.zeros(1)))


@st.composite
def codelet_tables(draw):
    m, n = draw(st.integers(1, 5)), draw(st.integers(1, 5))
    layouts = draw(st.lists(st.sampled_from(["strided", "col", "row", "point"]), min_size=3, max_size=3))
    i, j = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    tabs = []
    for lay in layouts:
        so, si = draw(st.integers(0, 3)), draw(st.integers(0, 3))
        if lay == "strided":
            t = so * i + si * j
        elif lay == "col":
            t = so * i + np.array(draw(st.lists(st.integers(0, 9), min_size=n, max_size=n)))[None, :]
        elif lay == "row":
            t = np.array(draw(st.lists(st.integers(0, 9), min_size=m, max_size=m)))[:, None] + si * j
        else:
            t = np.array(draw(st.lists(st.integers(0, 9), min_size=m * n, max_size=m * n))).reshape(m, n)
        tabs.append(t)
    return tabs


@given(codelet_tables(), st.integers(0, 2**31))
def test_any_codelet_matches_direct_accumulation(tabs, seed):
    try:
        c = Codelet.from_tables(*tabs)
    except ValueError:
        return
    rng = np.random.default_rng(seed)
    size = max(int(t.max()) for t in tabs) + 1
    ax, x = rng.integers(-4, 5, size).astype(float), rng.integers(-4, 5, size).astype(float)
    y = rng.integers(-4, 5, size).astype(float)
    ref = y.copy()
    o, m, v = tabs
    np.add.at(ref, o.ravel(), ax[m.ravel()] * x[v.ravel()])
    run = {CodeletKind.BLAS: exec_blas_codelet, CodeletKind.PSC_I: exec_psci_codelet,
           CodeletKind.PSC_II: exec_pscii_codelet}[c.kind]
    run(c, ExecutionContext(ax, x, y))
    np.testing.assert_array_equal(y, ref)


# ---------------------------------------------------------------- plans

def test_spmv_identity():
    a = from_dense(np.eye(4))
    assert spmv(inspect("spmv", a), a, [1, 2, 3, 4]).tolist() == [1, 2, 3, 4]


def test_sptrsv_bidiagonal():
    l = from_dense([[2, 0, 0], [1, 2, 0], [0, 1, 2]])
    assert sptrsv(inspect("sptrsv", l), l, [2, 3, 4]).tolist() == [1.0, 1.0, 1.5]


def test_empty_plan_leaves_output():
    l = from_dense(np.eye(3))
    plan = inspect("sptrsv", l)
    assert list(plan.codelets()) == []
    assert sptrsv(plan, l, [3, 4, 5]).tolist() == [3, 4, 5]


@pytest.mark.parametrize("t", [1, 2, 3, 8])
@pytest.mark.parametrize("workers", [1, 4])
def test_random_spmv_equals_baseline(t, workers):
    a = generate_pattern("random_uniform", rows=64, cols=64, density=0.1, seed=7)
    a = a.with_values(np.random.default_rng(t).integers(-3, 4, a.nnz).astype(float))
    x = np.random.default_rng(0).integers(-3, 4, 64).astype(float)
    plan = inspect("spmv", a, t=t, target_groups=workers)
    np.testing.assert_array_equal(spmv(plan, a, x, workers), spmv_csr_baseline(a, x))


def test_packed_plan_reusable_and_dimension_checks():
    a = random_square(30, 0.2, 1)
    pp = pack_plan(inspect("spmv", a))
    x = np.arange(30.0)
    y1, y2 = spmv(pp, a, x), spmv(pp, a, x)
    np.testing.assert_array_equal(y1, y2)
    with pytest.raises(ValueError):
        execute_plan(pp, ExecutionContext(a.values, np.ones(29), np.zeros(30)))
    with pytest.raises(ValueError):
        execute_plan(pp, ExecutionContext(a.values[:-1], np.ones(30), np.zeros(30)))
    l = m_matrix(a, np.random.default_rng(0))
    with pytest.raises(ValueError):
        execute_plan(inspect("sptrsv", l), ExecutionContext(l.values, np.zeros(30), np.zeros(30)))


def test_sptrsv_bitwise_identical_across_workers(rng):
    l = m_matrix(random_square(200, 0.05, 11), rng)
    b = rng.uniform(0.5, 1.5, 200)
    results = [sptrsv(inspect("sptrsv", l, target_groups=w), l, b, w) for w in (1, 2, 8)]
    for r in results[1:]:
        assert r.tobytes() == results[0].tobytes()


def test_spmv_partition_order_irrelevant(rng):
    a = random_square(100, 0.1, 5)
    a = a.with_values(rng.integers(-3, 4, a.nnz).astype(float))
    x = rng.integers(-3, 4, 100).astype(float)
    plan = inspect("spmv", a, target_groups=5)
    assert len(plan.partitions) == 5
    rev = dataclasses.replace(plan, partitions=plan.partitions[::-1])
    shuffled = dataclasses.replace(plan, partitions=tuple(tuple(p[::-1]) for p in plan.partitions))
    ref = spmv(plan, a, x)
    np.testing.assert_array_equal(spmv(rev, a, x), ref)
    np.testing.assert_array_equal(spmv(shuffled, a, x), ref)


@given(st.integers(1, 60), st.floats(0.02, 0.6), st.integers(0, 10_000), st.sampled_from([1, 2, 3, 8]))
def test_sptrsv_small_integers_exact(n, density, seed, t):
    rng = np.random.default_rng(seed)
    l = unit_lower(random_square(n, density, seed), rng)
    x_true = rng.integers(-2, 3, n).astype(float)
    b = _scipy(l) @ x_true
    plan = inspect("sptrsv", l, t=t)
    np.testing.assert_array_equal(sptrsv(plan, l, b), x_true)
    np.testing.assert_array_equal(sptrsv_csr_baseline(l, b), x_true)


# ---------------------------------------------------------------- baselines

def test_baselines_against_scipy(rng):
    a = random_square(80, 0.1, 2)
    a = a.with_values(rng.normal(size=a.nnz))
    x = rng.normal(size=80)
    np.testing.assert_allclose(spmv_csr_baseline(a, x), _scipy(a) @ x, rtol=1e-13, atol=1e-13)
    l = m_matrix(a, rng)
    b = rng.uniform(0.5, 1.5, 80)
    ref = spla.spsolve_triangular(_scipy(l), b, lower=True)
    np.testing.assert_allclose(sptrsv_csr_baseline(l, b), ref, rtol=1e-13)


def test_baseline_examples():
    eye = from_dense(np.eye(3))
    assert spmv_csr_baseline(eye, [4, 5, 6]).tolist() == [4, 5, 6]
    assert sptrsv_csr_baseline(eye, [4, 5, 6]).tolist() == [4, 5, 6]
    a = generate_pattern("dense_block", size=3).with_values(np.arange(1.0, 10.0))
    assert spmv_csr_baseline(a, np.ones(3)).tolist() == [6, 15, 24]
    with pytest.raises(ValueError):
        spmv_csr_baseline(a, np.ones(4))
    with pytest.raises(ValueError):
        sptrsv_csr_baseline(eye, np.ones(2))


def test_effective_workers():
    assert effective_workers(1) == 1
    assert 1 <= effective_workers(64) <= 64
    with pytest.raises(ValueError):
        effective_workers(0)
