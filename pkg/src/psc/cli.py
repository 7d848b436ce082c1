"""``psc`` command line.

    psc run --kernel spmv --matrix A.mtx [--matrix B.mtx] [--manifest LIST]
    psc generate KIND --out FILE.mtx [key=value ...]

Matrix sources are Matrix Market paths or synthetic specs of the form
``gen:KIND:key=value:...`` (for example ``gen:banded:n=512:bandwidth=4``).
PSC_SEED seeds synthetic values, right-hand sides and random patterns.
Exit status is 0 only when every matrix verifies against the baseline.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import bench
from .kernel_model import KernelKind
from .matrix_io import MatrixMarketError, PatternError, TriangularError, generate_pattern, write_matrix_market

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _seed() -> int:
    raw = os.environ.get(bench.SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"psc: error: {bench.SEED_ENV} must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psc", description="Mine and run partially strided codelets.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="inspect, execute, verify and time")
    r.add_argument("--kernel", choices=[k.value for k in KernelKind], default="spmv")
    r.add_argument("--matrix", action="append", default=[], metavar="FILE.mtx",
                   help="matrix file or gen:KIND:key=value spec; repeatable")
    r.add_argument("--manifest", metavar="FILE", help="file listing one matrix source per line")
    r.add_argument("--t", type=_positive_int, default=3, help="rows per mining window (default 3)")
    r.add_argument("--groups", type=_positive_int, default=None,
                   help="row groups for SpMV partitioning (default: --workers)")
    r.add_argument("--workers", type=_positive_int, default=1)
    r.add_argument("--repeats", type=_positive_int, default=5)
    r.add_argument("--format", choices=("csv", "json", "text"), default="csv")
    r.add_argument("--verify-tol", type=float, default=1e-12)
    r.add_argument("--dump-plan", metavar="FILE", help="write the mined plan as JSON")
    r.add_argument("--baseline-only", action="store_true", help="time the CSR baseline only")
    r.add_argument("--output", "-o", metavar="FILE", help="write the report here instead of stdout")

    g = sub.add_parser("generate", help="write a synthetic pattern as Matrix Market")
    g.add_argument("kind")
    g.add_argument("params", nargs="*", metavar="key=value")
    g.add_argument("--out", required=True)
    return p


def _dump_path(base: str | None, k: int, n: int) -> str | None:
    if base is None or n == 1:
        return base
    p = Path(base)
    return str(p.with_name(f"{p.stem}.{k}{p.suffix}"))


def cmd_run(args) -> int:
    sources = list(args.matrix)
    if args.manifest:
        sources += bench.read_manifest(args.manifest)
    if not sources:
        print("psc: error: give --matrix or --manifest", file=sys.stderr)
        return EXIT_USAGE
    seed = _seed()
    reports = []
    for k, src in enumerate(sources):
        cfg = bench.BenchConfig(
            kernel=args.kernel, t=args.t, groups=args.groups, workers=args.workers,
            repeats=args.repeats, verify_tol=args.verify_tol, baseline_only=args.baseline_only,
            dump_plan=_dump_path(args.dump_plan, k, len(sources)), seed=seed,
        )
        a = bench.load_matrix(src, seed)
        reports.append(bench.run_bench(src, a, cfg))
    text = bench.emit_reports(reports, args.format)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    failed = [r.matrix for r in reports if not r.verified]
    for m in failed:
        print(f"psc: verification failed for {m}", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_generate(args) -> int:
    params = {}
    for item in args.params:
        key, sep, value = item.partition("=")
        if not sep:
            print(f"psc: error: expected key=value, got {item!r}", file=sys.stderr)
            return EXIT_USAGE
        params[key] = bench.parse_param(value)
    if args.kind == "random_uniform":
        params.setdefault("seed", _seed())
    write_matrix_market(generate_pattern(args.kind, **params), args.out)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_generate(args)
    except (OSError, MatrixMarketError, PatternError, TriangularError, ValueError, TypeError) as e:
        print(f"psc: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
