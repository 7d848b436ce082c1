"""CSR storage, Matrix Market I/O and synthetic sparsity patterns.

Everything here is 0-based. Matrix Market's 1-based coordinates are
translated at the parse/serialize boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "CsrMatrix",
    "MatrixMarketError",
    "PatternError",
    "TriangularError",
    "parse_matrix_market",
    "read_matrix_market",
    "serialize_matrix_market",
    "write_matrix_market",
    "from_coo",
    "from_dense",
    "lower_triangular",
    "ensure_diagonal",
    "generate_pattern",
    "PATTERN_KINDS",
]


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input. ``line`` is 1-based (0 when unknown)."""

    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class PatternError(ValueError):
    pass


class TriangularError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Canonical CSR matrix: sorted, duplicate-free columns within each row.

    The arrays are made read-only on construction; build a new matrix
    instead of mutating one.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rp = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        ci = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        vx = np.ascontiguousarray(self.values, dtype=np.float64)
        for arr in (rp, ci, vx):
            arr.setflags(write=False)
        object.__setattr__(self, "row_offsets", rp)
        object.__setattr__(self, "col_indices", ci)
        object.__setattr__(self, "values", vx)
        self.validate()

    def validate(self) -> None:
        rp, ci = self.row_offsets, self.col_indices
        if self.n_rows < 0 or self.n_cols < 0:
            raise PatternError("negative dimension")
        if rp.shape != (self.n_rows + 1,):
            raise PatternError("row_offsets must have length n_rows + 1")
        if rp[0] != 0:
            raise PatternError("row_offsets[0] must be 0")
        if np.any(np.diff(rp) < 0):
            raise PatternError("row_offsets must be non-decreasing")
        nnz = int(rp[-1])
        if ci.shape != (nnz,) or self.values.shape != (nnz,):
            raise PatternError("col_indices/values length must equal row_offsets[-1]")
        if nnz and (ci.min() < 0 or ci.max() >= self.n_cols):
            raise PatternError("column index out of range")
        # strictly increasing inside a row; row starts may go down
        steps = np.diff(ci)
        starts = np.zeros(nnz, dtype=bool)
        starts[rp[1:-1][rp[1:-1] < nnz]] = True
        if nnz > 1 and np.any((steps <= 0) & ~starts[1:]):
            raise PatternError("columns within a row must be strictly increasing")

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_cols

    def row_lengths(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[lo:hi], self.values[lo:hi]

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.n_rows), self.row_lengths())
        out[rows, self.col_indices] = self.values
        return out

    def with_values(self, values: Sequence[float] | np.ndarray) -> "CsrMatrix":
        return CsrMatrix(self.n_rows, self.n_cols, self.row_offsets, self.col_indices,
                         np.asarray(values, dtype=np.float64))

    def same_as(self, other: "CsrMatrix") -> bool:
        """Exact equality of dimensions and all three arrays."""
        return (
            self.shape == other.shape
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )

    def is_lower_triangular(self) -> bool:
        rows = np.repeat(np.arange(self.n_rows), self.row_lengths())
        return bool(np.all(self.col_indices <= rows))

    def diagonal_positions(self) -> np.ndarray:
        """Position of each row's diagonal in ``values``; -1 where absent."""
        pos = np.full(self.n_rows, -1, dtype=np.int64)
        for i in range(min(self.n_rows, self.n_cols)):
            cols, _ = self.row(i)
            k = np.searchsorted(cols, i)
            if k < cols.size and cols[k] == i:
                pos[i] = self.row_offsets[i] + k
        return pos

    def __repr__(self) -> str:
        return f"CsrMatrix(shape={self.shape}, nnz={self.nnz})"


def from_coo(n_rows: int, n_cols: int, rows, cols, vals=None) -> CsrMatrix:
    """Build a canonical CSR matrix, summing duplicate coordinates."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.ones(rows.size) if vals is None else np.asarray(vals, dtype=np.float64).ravel()
    if not (rows.size == cols.size == vals.size):
        raise PatternError("coordinate arrays differ in length")
    if rows.size and (rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols):
        raise PatternError("coordinate out of range")
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size:
        keep = np.ones(rows.size, dtype=bool)
        keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        group = np.cumsum(keep) - 1
        summed = np.zeros(int(keep.sum()))
        np.add.at(summed, group, vals)
        rows, cols, vals = rows[keep], cols[keep], summed
    counts = np.bincount(rows, minlength=n_rows)
    rp = np.concatenate(([0], np.cumsum(counts)))
    return CsrMatrix(n_rows, n_cols, rp, cols, vals)


def from_dense(dense, keep_zeros: bool = False) -> CsrMatrix:
    d = np.atleast_2d(np.asarray(dense, dtype=np.float64))
    r, c = np.nonzero(np.ones_like(d) if keep_zeros else d)
    return from_coo(d.shape[0], d.shape[1], r, c, d[r, c])


# --------------------------------------------------------------------------
# Matrix Market
# --------------------------------------------------------------------------

_FIELDS = ("real", "integer", "pattern")
_SYMMETRIES = ("general", "symmetric")


def parse_matrix_market(text: str | Iterable[str]) -> CsrMatrix:
    """Parse a coordinate-format Matrix Market body into canonical CSR.

    Symmetric storage is mirrored into the full matrix, duplicates are
    summed and pattern entries get the value 1.0. Explicit zeros are kept
    as stored entries.
    """
    lines = text.splitlines() if isinstance(text, str) else list(text)
    if not lines:
        raise MatrixMarketError("empty input", 1)

    header = lines[0].strip().split()
    if len(header) != 5 or header[0] != "%%MatrixMarket":
        raise MatrixMarketError("expected '%%MatrixMarket matrix coordinate <field> <symmetry>'", 1)
    obj, fmt, field, symmetry = (h.lower() for h in header[1:])
    if obj != "matrix":
        raise MatrixMarketError(f"unsupported object {obj!r}", 1)
    if fmt != "coordinate":
        raise MatrixMarketError(f"unsupported format {fmt!r}", 1)
    if field not in _FIELDS:
        raise MatrixMarketError(f"unsupported field {field!r}", 1)
    if symmetry not in _SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry {symmetry!r}", 1)

    it = iter(enumerate(lines[1:], start=2))
    size = None
    for lineno, line in it:
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if len(parts) != 3:
            raise MatrixMarketError("size line must be 'rows cols nnz'", lineno)
        try:
            size = tuple(int(p) for p in parts)
        except ValueError:
            raise MatrixMarketError("non-integer size line", lineno) from None
        break
    if size is None:
        raise MatrixMarketError("missing size line", len(lines))
    n_rows, n_cols, n_entries = size
    if n_rows < 0 or n_cols < 0 or n_entries < 0:
        raise MatrixMarketError("negative size", lineno)
    if symmetry == "symmetric" and n_rows != n_cols:
        raise MatrixMarketError("symmetric matrix must be square", lineno)

    rows = np.empty(n_entries, dtype=np.int64)
    cols = np.empty(n_entries, dtype=np.int64)
    vals = np.ones(n_entries, dtype=np.float64)
    want = 2 if field == "pattern" else 3
    k = 0
    last = lineno
    for lineno, line in it:
        last = lineno
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        if k >= n_entries:
            raise MatrixMarketError(f"more than the declared {n_entries} entries", lineno)
        parts = s.split()
        if len(parts) != want:
            raise MatrixMarketError(f"expected {want} fields, got {len(parts)}", lineno)
        try:
            r, c = int(parts[0]), int(parts[1])
        except ValueError:
            raise MatrixMarketError("non-integer coordinate", lineno) from None
        if not (1 <= r <= n_rows and 1 <= c <= n_cols):
            raise MatrixMarketError(f"coordinate ({r}, {c}) out of range", lineno)
        if field != "pattern":
            try:
                vals[k] = int(parts[2]) if field == "integer" else float(parts[2])
            except ValueError:
                raise MatrixMarketError(f"non-numeric value {parts[2]!r}", lineno) from None
        rows[k], cols[k] = r - 1, c - 1
        k += 1
    if k != n_entries:
        raise MatrixMarketError(f"header declares {n_entries} entries, found {k}", last)

    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate((rows, cols[off])),
            np.concatenate((cols, rows[off])),
            np.concatenate((vals, vals[off])),
        )
    return from_coo(n_rows, n_cols, rows, cols, vals)


def read_matrix_market(path) -> CsrMatrix:
    with open(path, "r", encoding="ascii") as fh:
        return parse_matrix_market(fh.read())


def serialize_matrix_market(a: CsrMatrix, comment: str | None = None) -> str:
    """General real coordinate format; values written with full precision."""
    out = ["%%MatrixMarket matrix coordinate real general"]
    if comment:
        out.extend(f"% {c}" for c in comment.splitlines())
    out.append(f"{a.n_rows} {a.n_cols} {a.nnz}")
    rows = np.repeat(np.arange(a.n_rows), a.row_lengths())
    for r, c, v in zip(rows, a.col_indices, a.values):
        out.append(f"{r + 1} {c + 1} {float(v)!r}")
    return "\n".join(out) + "\n"


def write_matrix_market(a: CsrMatrix, path, comment: str | None = None) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(serialize_matrix_market(a, comment))


# --------------------------------------------------------------------------
# Triangular systems
# --------------------------------------------------------------------------

def lower_triangular(a: CsrMatrix) -> CsrMatrix:
    """Lower triangle (diagonal included) of a square matrix.

    Raises TriangularError when a diagonal entry is missing or zero, since
    the result would not be a solvable triangular system.
    """
    if a.n_rows != a.n_cols:
        raise TriangularError(f"matrix is not square: {a.shape}")
    rows = np.repeat(np.arange(a.n_rows), a.row_lengths())
    keep = a.col_indices <= rows
    low = from_coo(a.n_rows, a.n_cols, rows[keep], a.col_indices[keep], a.values[keep])
    check_triangular(low)
    return low


def check_triangular(l: CsrMatrix) -> None:
    if l.n_rows != l.n_cols:
        raise TriangularError(f"matrix is not square: {l.shape}")
    if not l.is_lower_triangular():
        raise TriangularError("matrix has entries above the diagonal")
    rp = l.row_offsets
    lengths = np.diff(rp)
    # canonical lower rows end with the diagonal
    last = rp[1:] - 1
    has_diag = (lengths > 0) & (l.col_indices[np.maximum(last, 0)] == np.arange(l.n_rows)) if l.nnz else lengths > 0
    if not np.all(has_diag):
        raise TriangularError(f"row {int(np.flatnonzero(~has_diag)[0])} has no diagonal entry")
    zero = l.values[last] == 0.0
    if np.any(zero):
        raise TriangularError(f"row {int(np.flatnonzero(zero)[0])} has a zero diagonal entry")


def ensure_diagonal(a: CsrMatrix, value: float = 1.0) -> CsrMatrix:
    """Insert ``value`` on the diagonal where the square matrix has none."""
    if a.n_rows != a.n_cols:
        raise TriangularError(f"matrix is not square: {a.shape}")
    missing = np.flatnonzero(a.diagonal_positions() < 0)
    rows = np.concatenate((np.repeat(np.arange(a.n_rows), a.row_lengths()), missing))
    cols = np.concatenate((a.col_indices, missing))
    vals = np.concatenate((a.values, np.full(missing.size, value)))
    return from_coo(a.n_rows, a.n_cols, rows, cols, vals)


# --------------------------------------------------------------------------
# Synthetic patterns
# --------------------------------------------------------------------------

PATTERN_KINDS = ("dense_block", "banded", "random_uniform", "scattered_gather")


def generate_pattern(kind: str, **params) -> CsrMatrix:
    """Deterministic synthetic pattern with unit values.

    dense_block(size | rows, cols)
    banded(n, bandwidth, shape="lower"|"full")
    random_uniform(rows, cols, density, seed)
    scattered_gather(rows, cols, n_cols=None, shift=0)
        every row i holds columns ``c + shift*i`` for c in ``cols``;
        shift=0 gives the shared gather set.
    """
    try:
        build = _GENERATORS[kind]
    except KeyError:
        raise PatternError(f"unknown pattern kind {kind!r}; expected one of {PATTERN_KINDS}") from None
    return build(**params)


def _positive(name, v):
    if int(v) != v or v <= 0:
        raise PatternError(f"{name} must be a positive integer, got {v!r}")
    return int(v)


def _dense_block(size=None, rows=None, cols=None):
    rows = _positive("rows", rows if rows is not None else size)
    cols = _positive("cols", cols if cols is not None else rows)
    r = np.repeat(np.arange(rows), cols)
    c = np.tile(np.arange(cols), rows)
    return from_coo(rows, cols, r, c)


def _banded(n, bandwidth, shape="lower"):
    n = _positive("n", n)
    if bandwidth < 0:
        raise PatternError("bandwidth must be >= 0")
    if shape not in ("lower", "full"):
        raise PatternError("banded shape must be 'lower' or 'full'")
    hi = 0 if shape == "lower" else bandwidth
    r, c = [], []
    for i in range(n):
        lo_c, hi_c = max(0, i - bandwidth), min(n - 1, i + hi)
        r.extend([i] * (hi_c - lo_c + 1))
        c.extend(range(lo_c, hi_c + 1))
    return from_coo(n, n, r, c)


def _random_uniform(rows, cols, density, seed):
    rows, cols = _positive("rows", rows), _positive("cols", cols)
    if not (0.0 < density <= 1.0):
        raise PatternError(f"density must lie in (0, 1], got {density!r}")
    if seed is None:
        raise PatternError("random_uniform needs an explicit seed")
    mask = np.random.default_rng(seed).random((rows, cols)) < density
    r, c = np.nonzero(mask)
    return from_coo(rows, cols, r, c)


def _scattered_gather(rows, cols, n_cols=None, shift=0):
    rows = _positive("rows", rows)
    base = np.unique(np.asarray(list(cols), dtype=np.int64))
    if base.size == 0 or base[0] < 0:
        raise PatternError("scattered_gather needs a non-empty set of non-negative columns")
    if shift < 0:
        raise PatternError("shift must be >= 0")
    width = int(base[-1] + shift * (rows - 1) + 1)
    n_cols = width if n_cols is None else int(n_cols)
    if n_cols < width:
        raise PatternError(f"n_cols={n_cols} too small, need {width}")
    r = np.repeat(np.arange(rows), base.size)
    c = np.tile(base, rows) + shift * r
    return from_coo(rows, n_cols, r, c)


_GENERATORS = {
    "dense_block": _dense_block,
    "banded": _banded,
    "random_uniform": _random_uniform,
    "scattered_gather": _scattered_gather,
}
