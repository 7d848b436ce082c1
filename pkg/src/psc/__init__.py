"""Partially strided codelets for sparse matrix kernels.

An inspector mines each sparsity pattern for rectangles of iterations whose
memory accesses are fully (BLAS) or partially (PSC type I / II) strided,
picks the cheapest cover under a load-count cost model, and a parametric
executor runs the resulting plan for SpMV or SpTRSV.
"""

from .bench import BenchConfig, BenchReport, compute_ner, emit_report, emit_reports, run_bench
from .executor import (
    ExecutionContext,
    execute_plan,
    pack_plan,
    spmv,
    spmv_csr_baseline,
    sptrsv,
    sptrsv_csr_baseline,
)
from .kernel_model import (
    CodeletKind,
    KernelKind,
    Region,
    classify_codelet,
    compute_access_functions,
    compute_fopd,
)
from .matrix_io import (
    CsrMatrix,
    from_coo,
    from_dense,
    generate_pattern,
    lower_triangular,
    parse_matrix_market,
    read_matrix_market,
    write_matrix_market,
)
from .miner import Codelet, CodeletPlan, codelet_cost, coverage_violations, inspect
from .scheduler import find_dependencies, partition_iteration_space

__all__ = [
    "BenchConfig",
    "BenchReport",
    "Codelet",
    "CodeletKind",
    "CodeletPlan",
    "CsrMatrix",
    "ExecutionContext",
    "KernelKind",
    "Region",
    "classify_codelet",
    "codelet_cost",
    "compute_access_functions",
    "compute_fopd",
    "compute_ner",
    "coverage_violations",
    "emit_report",
    "emit_reports",
    "execute_plan",
    "find_dependencies",
    "from_coo",
    "from_dense",
    "generate_pattern",
    "inspect",
    "lower_triangular",
    "pack_plan",
    "parse_matrix_market",
    "partition_iteration_space",
    "read_matrix_market",
    "run_bench",
    "spmv",
    "spmv_csr_baseline",
    "sptrsv",
    "sptrsv_csr_baseline",
    "write_matrix_market",
]
