import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from psc.matrix_io import CsrMatrix, ensure_diagonal, from_coo, generate_pattern, lower_triangular

settings.register_profile(
    "psc",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("psc")


def gather3_pattern(shift=0):
    # three rows gathering columns {0, 2, 5}; shift=1 gives h = i0 + s[i1]
    return generate_pattern("scattered_gather", rows=3, cols=[0, 2, 5], shift=shift)


def m_matrix(pattern: CsrMatrix, rng) -> CsrMatrix:
    """Lower triangle of ``pattern`` as an M-matrix: negative off-diagonals
    and a strictly dominant diagonal. With b > 0 the solution is positive,
    so forward substitution has no cancellation."""
    low = lower_triangular(ensure_diagonal(pattern, 1.0))
    v = -rng.uniform(0.1, 1.0, low.nnz)
    diag = low.row_offsets[1:] - 1
    rows = np.repeat(np.arange(low.n_rows), low.row_lengths())
    v[diag] = np.bincount(rows, weights=np.abs(v), minlength=low.n_rows) - np.abs(v[diag]) + 1.0
    return low.with_values(v)


def unit_lower(pattern: CsrMatrix, rng) -> CsrMatrix:
    """Unit-diagonal lower triangle with small-integer off-diagonals, so
    forward substitution stays in exact integer arithmetic."""
    low = lower_triangular(ensure_diagonal(pattern, 1.0))
    v = rng.integers(-2, 3, low.nnz).astype(float)
    v[low.row_offsets[1:] - 1] = 1.0
    return low.with_values(v)


def random_square(n, density, seed):
    return generate_pattern("random_uniform", rows=n, cols=n, density=density, seed=seed)


def dense_lower_from(dense):
    d = np.asarray(dense, dtype=float)
    r, c = np.nonzero(np.tril(np.ones_like(d)))
    return from_coo(d.shape[0], d.shape[1], r, c, d[r, c])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
