"""Inspect, execute, verify and time one matrix; serialize the results."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .executor import (
    ExecutionContext,
    execute_plan,
    pack_plan,
    spmv_csr_baseline,
    sptrsv_csr_baseline,
)
from .kernel_model import KernelKind
from .matrix_io import (
    CsrMatrix,
    PatternError,
    ensure_diagonal,
    generate_pattern,
    lower_triangular,
    read_matrix_market,
)
from .miner import inspect, plan_to_dict

__all__ = [
    "BenchConfig",
    "BenchReport",
    "NOT_AMORTIZABLE",
    "CSV_COLUMNS",
    "compute_ner",
    "theoretical_flops",
    "measure",
    "max_relative_error",
    "magnitude_scale",
    "load_matrix",
    "read_manifest",
    "run_bench",
    "emit_report",
    "emit_reports",
]

NOT_AMORTIZABLE = "not amortizable"
SEED_ENV = "PSC_SEED"
SYNTHETIC_PREFIX = "gen:"

CSV_COLUMNS = (
    "matrix", "kernel", "n_rows", "nnz", "t", "groups", "workers", "repeats",
    "inspector_seconds", "executor_seconds", "baseline_seconds", "gflops", "ner",
    "blas", "psc_i", "psc_ii", "verified", "max_rel_error",
)


@dataclass
class BenchConfig:
    kernel: KernelKind = KernelKind.SPMV
    t: int = 3
    groups: int | None = None
    workers: int = 1
    repeats: int = 5
    verify_tol: float = 1e-12
    baseline_only: bool = False
    dump_plan: str | None = None
    seed: int = 0

    def __post_init__(self):
        self.kernel = KernelKind(self.kernel)
        for name in ("t", "workers", "repeats"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.groups is not None and self.groups < 1:
            raise ValueError("groups must be >= 1")
        if not self.verify_tol >= 0:
            raise ValueError("verify_tol must be >= 0")

    @property
    def target_groups(self) -> int:
        return self.groups if self.groups is not None else self.workers


@dataclass
class BenchReport:
    """One matrix, one kernel. Timings are seconds; ``ner`` is None when the
    executor never pays back the inspection. ``None`` timings mean the stage
    was skipped (``--baseline-only``)."""

    matrix: str
    kernel: str
    n_rows: int
    nnz: int
    t: int
    groups: int
    workers: int
    repeats: int
    inspector_seconds: float | None
    executor_seconds: float | None
    baseline_seconds: float
    gflops: float
    ner: float | None
    breakdown: dict = field(default_factory=lambda: {"BLAS": 0.0, "PSC_I": 0.0, "PSC_II": 0.0})
    verified: bool = True
    max_rel_error: float = 0.0

    @property
    def ner_display(self) -> str | float | None:
        if self.executor_seconds is None:
            return None
        return NOT_AMORTIZABLE if self.ner is None else self.ner


def compute_ner(inspector_seconds: float, baseline_seconds: float, executor_seconds: float) -> float | None:
    """Executor runs needed before inspection pays for itself.

    ``None`` when the executor is no faster than the baseline.
    """
    gain = baseline_seconds - executor_seconds
    if gain <= 0:
        return None
    return inspector_seconds / gain


def theoretical_flops(kernel: KernelKind | str, a: CsrMatrix) -> int:
    # SpTRSV: a multiply-add per off-diagonal and one divide per row
    if KernelKind(kernel) is KernelKind.SPMV:
        return 2 * a.nnz
    return 2 * a.nnz - a.n_rows


def measure(fn: Callable[[], object], repeats: int, warmup: bool = True) -> float:
    """Median wall time of ``repeats`` calls on a monotonic clock."""
    if warmup:
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def max_relative_error(result: np.ndarray, reference: np.ndarray, scale: np.ndarray | None = None) -> float:
    """Largest of ``|result - reference| / scale`` elementwise.

    ``scale`` defaults to ``|reference|``. Entries with a zero scale are
    compared absolutely.
    """
    result, reference = np.asarray(result), np.asarray(reference)
    if result.shape != reference.shape:
        return math.inf
    if result.size == 0:
        return 0.0
    if not np.all(np.isfinite(result)):
        return math.inf
    scale = np.abs(reference) if scale is None else np.asarray(scale)
    diff = np.abs(result - reference)
    err = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), diff)
    return float(err.max())


def magnitude_scale(a: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """Row sums of ``|a| * |x|``: the size of each row's terms before any
    cancellation. Rounding error is relative to this, not to the result."""
    rows = np.repeat(np.arange(a.n_rows), a.row_lengths())
    return np.bincount(rows, weights=np.abs(a.values) * np.abs(x[a.col_indices]), minlength=a.n_rows)


# --------------------------------------------------------------------------
# inputs
# --------------------------------------------------------------------------

def parse_param(value: str):
    if "," in value:
        return [parse_param(v) for v in value.split(",") if v]
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            pass
    return value


def _synthetic(spec: str, seed: int) -> CsrMatrix:
    # gen:KIND:key=value:key=value, list values comma separated
    parts = spec[len(SYNTHETIC_PREFIX):].split(":")
    kind, params = parts[0], {}
    for p in parts[1:]:
        key, sep, value = p.partition("=")
        if not sep:
            raise PatternError(f"bad synthetic parameter {p!r} in {spec!r}; expected key=value")
        params[key] = parse_param(value)
    if kind == "random_uniform":
        params.setdefault("seed", seed)
    a = generate_pattern(kind, **params)
    # unit values hide reassociation bugs; use well-scaled random ones
    rng = np.random.default_rng(seed)
    return a.with_values(rng.uniform(0.5, 1.5, a.nnz))


def load_matrix(source: str, seed: int = 0) -> CsrMatrix:
    """A Matrix Market path or a ``gen:KIND:key=value...`` synthetic spec."""
    if source.startswith(SYNTHETIC_PREFIX):
        return _synthetic(source, seed)
    return read_matrix_market(source)


def read_manifest(path: str | os.PathLike) -> list[str]:
    """One matrix source per line; blank lines and ``#`` comments skipped.
    Relative paths resolve against the manifest's directory."""
    base = Path(path).parent
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if not line.startswith(SYNTHETIC_PREFIX) and not Path(line).is_absolute():
            line = str(base / line)
        out.append(line)
    return out


def _dominant_lower(a: CsrMatrix) -> CsrMatrix:
    # synthetic SpTRSV input: an M-matrix (negative off-diagonals, dominant
    # diagonal), so a positive right-hand side gives a positive solution
    low = lower_triangular(ensure_diagonal(a, 1.0))
    v = -np.abs(low.values)
    diag = low.row_offsets[1:] - 1
    rows = np.repeat(np.arange(low.n_rows), low.row_lengths())
    v[diag] = np.bincount(rows, weights=np.abs(v), minlength=low.n_rows) + 1.0
    return low.with_values(v)


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------

Timer = Callable[[str, Callable[[], object], int], float]


def _default_timer(stage: str, fn: Callable[[], object], repeats: int) -> float:
    if stage == "inspector":
        return measure(fn, 1, warmup=False)
    return measure(fn, repeats)


def run_bench(source: str, matrix: CsrMatrix, cfg: BenchConfig, timer: Timer | None = None) -> BenchReport:
    """Inspect once, time executor and baseline, verify the executor.

    ``timer(stage, fn, repeats)`` returns seconds for stage ``inspector``,
    ``executor`` or ``baseline``; it must call ``fn`` at least once. Tests
    inject fixed timings through it.
    """
    timer = timer or _default_timer
    kernel = cfg.kernel
    rng = np.random.default_rng(cfg.seed)
    if kernel is KernelKind.SPTRSV:
        # file matrices must already carry a nonzero diagonal
        a = _dominant_lower(matrix) if source.startswith(SYNTHETIC_PREFIX) else lower_triangular(matrix)
        rhs = rng.uniform(0.5, 1.5, a.n_rows)
        baseline = lambda: sptrsv_csr_baseline(a, rhs)  # noqa: E731
    else:
        a = matrix
        rhs = rng.uniform(0.5, 1.5, a.n_cols)
        baseline = lambda: spmv_csr_baseline(a, rhs)  # noqa: E731

    reference = baseline()
    scale = magnitude_scale(a, reference if kernel is KernelKind.SPTRSV else rhs)
    t_base = timer("baseline", baseline, cfg.repeats)
    flops = theoretical_flops(kernel, a)
    report = BenchReport(
        matrix=source, kernel=kernel.value, n_rows=a.n_rows, nnz=a.nnz, t=cfg.t,
        groups=cfg.target_groups, workers=cfg.workers, repeats=cfg.repeats,
        inspector_seconds=None, executor_seconds=None, baseline_seconds=t_base,
        gflops=flops / t_base / 1e9 if t_base > 0 else math.inf, ner=None,
    )
    if cfg.baseline_only:
        return report

    holder = {}

    def do_inspect():
        holder["plan"] = inspect(kernel, a, t=cfg.t, target_groups=cfg.target_groups)

    t_insp = timer("inspector", do_inspect, 1)
    if "plan" not in holder:
        do_inspect()
    plan = holder["plan"]
    if cfg.dump_plan:
        Path(cfg.dump_plan).write_text(json.dumps(plan_to_dict(plan), indent=1) + "\n")
    packed = pack_plan(plan)

    out = np.zeros(a.n_rows)
    if kernel is KernelKind.SPTRSV:
        acc = np.zeros(a.n_rows)
        ctx = ExecutionContext(a.values, out, acc, rhs)

        def run():
            acc[:] = 0.0
            execute_plan(packed, ctx, cfg.workers)
    else:
        ctx = ExecutionContext(a.values, rhs, out)

        def run():
            out[:] = 0.0
            execute_plan(packed, ctx, cfg.workers)

    run()
    err = max_relative_error(out, reference, scale)
    t_exec = timer("executor", run, cfg.repeats)

    report.inspector_seconds = t_insp
    report.executor_seconds = t_exec
    report.gflops = flops / t_exec / 1e9 if t_exec > 0 else math.inf
    report.ner = compute_ner(t_insp, t_base, t_exec)
    report.breakdown = plan.breakdown()
    report.max_rel_error = err
    report.verified = err <= cfg.verify_tol
    return report


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _row(r: BenchReport) -> dict:
    return {
        "matrix": r.matrix,
        "kernel": r.kernel,
        "n_rows": r.n_rows,
        "nnz": r.nnz,
        "t": r.t,
        "groups": r.groups,
        "workers": r.workers,
        "repeats": r.repeats,
        "inspector_seconds": r.inspector_seconds,
        "executor_seconds": r.executor_seconds,
        "baseline_seconds": r.baseline_seconds,
        "gflops": r.gflops,
        "ner": r.ner_display,
        "blas": r.breakdown["BLAS"],
        "psc_i": r.breakdown["PSC_I"],
        "psc_ii": r.breakdown["PSC_II"],
        "verified": r.verified,
        "max_rel_error": r.max_rel_error,
    }


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "pass" if v else "fail"
    return repr(v) if isinstance(v, float) else str(v)


def emit_reports(reports: Sequence[BenchReport], fmt: str = "csv") -> str:
    """Serialize a batch. CSV: header plus one line per report, columns in
    ``CSV_COLUMNS`` order. JSON: a list of objects with those keys."""
    rows = [_row(r) for r in reports]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([_csv_cell(row[c]) for c in CSV_COLUMNS])
        return buf.getvalue()
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    if fmt == "text":
        width = max(len(c) for c in CSV_COLUMNS)
        blocks = []
        for row in rows:
            blocks.append("\n".join(f"{c:<{width}}  {_csv_cell(row[c]) or '-'}" for c in CSV_COLUMNS))
        return "\n\n".join(blocks) + "\n"
    raise ValueError(f"unknown format {fmt!r}; expected csv, json or text")


def emit_report(report: BenchReport, fmt: str = "csv") -> str:
    return emit_reports([report], fmt)
