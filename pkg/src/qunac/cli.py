"""Command line: ``qunac solve | bench | selftest``.

Exit codes for ``solve``: 0 converged, 2 stopped early (small step, timeout,
iteration cap), 1 error.  ``bench`` and ``selftest`` return 0 when every run
or property succeeded.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import shlex
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .driver import Method, NewtonConfig, SolveReport, StopReason, minimize
from .libsvm import load_libsvm, synthetic_dataset
from .problems import L2, PseudoHuber, builtin_problem, logistic_svm

TRACE_FIELDS = ("k", "f", "gnorm", "rel_gnorm", "q", "step", "cum_hv", "seconds", "events")
EXIT_OK, EXIT_ERROR, EXIT_EARLY = 0, 1, 2
CELL_MARKS = {
    StopReason.SMALL_STEP: "ss",
    StopReason.TIMEOUT: "TO",
    StopReason.MAX_ITERATIONS: "MI",
    StopReason.NUMERICAL_BREAKDOWN: "NB",
}


class UsageError(Exception):
    pass


@dataclass
class RunSpec:
    """One solve: a problem selector, a method and config overrides."""

    problem: str | None = None
    data: str | None = None
    reg: str = "l2"
    lam: float = 1.0
    mu: float = 0.1
    method: str = Method.INVERSE_QUNAC.value
    eps: float | None = None
    max_q: int | None = None
    memory: int | None = None
    max_time: float | None = None
    max_iter: int | None = None
    reset: bool = False
    seed: int = 0
    out: str | None = None
    fmt: str = "csv"

    def validate(self):
        if (self.problem is None) == (self.data is None):
            raise UsageError("give exactly one of --problem or --data")
        parse_method(self.method)
        if self.reg not in ("l2", "huber"):
            raise UsageError(f"unknown regularizer {self.reg!r}; choose l2 or huber")
        if self.fmt not in ("csv", "json"):
            raise UsageError(f"unknown format {self.fmt!r}; choose csv or json")
        return self

    @property
    def label(self) -> str:
        if self.problem:
            return self.problem
        reg = "l2" if self.reg == "l2" else f"huber{self.mu:g}"
        return f"{Path(self.data).name}|{reg}|{self.lam:g}"

    def config(self) -> NewtonConfig:
        kw = dict(method=parse_method(self.method), reset_enabled=self.reset)
        if self.eps is not None:
            kw["eps"] = self.eps
        elif self.data is not None:
            kw["eps"] = 1e-7
        for key, attr in (("max_q", "max_q"), ("memory", "memory"), ("max_time", "max_time_seconds"),
                          ("max_iter", "max_outer_iterations")):
            val = getattr(self, key)
            if val is not None:
                kw[attr] = val
        return NewtonConfig(**kw)


def parse_method(name: str) -> Method:
    try:
        return Method(name)
    except ValueError:
        valid = ", ".join(m.value for m in Method)
        raise UsageError(f"unknown method {name!r}; valid methods: {valid}") from None


def build_problem(spec: RunSpec):
    if spec.problem:
        try:
            return builtin_problem(spec.problem)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if spec.data.startswith("synthetic"):
        _, _, shape = spec.data.partition(":")
        m, _, n = (shape or "270x13").partition("x")
        data = synthetic_dataset(int(m), int(n), seed=spec.seed)
    else:
        data = load_libsvm(spec.data)
    reg = L2() if spec.reg == "l2" else PseudoHuber(spec.mu)
    return logistic_svm(data, reg, spec.lam)


def trace_rows(report: SolveReport) -> list[dict]:
    """Trace as string fields; floats use ``repr`` so they parse back exactly."""
    rows = []
    for r in report.trace:
        rows.append({
            "k": str(r.k), "f": repr(r.f), "gnorm": repr(r.gnorm), "rel_gnorm": repr(r.rel_gnorm),
            "q": str(r.q), "step": repr(r.step), "cum_hv": str(r.cum_hv), "seconds": repr(r.seconds),
            "events": ";".join(r.events),
        })
    return rows


def summary(report: SolveReport, spec: RunSpec) -> dict:
    return {
        "problem": spec.label,
        "method": parse_method(spec.method).value,
        "stop_reason": report.stop_reason.value,
        "converged_by": report.converged_by or "",
        "f": report.f,
        "rel_gnorm": report.rel_gnorm,
        "outer_iterations": report.outer_iterations,
        "total_inner": report.total_inner,
        "seconds": report.seconds,
        "message": report.message,
    }


def write_trace_csv(report: SolveReport, stream) -> None:
    writer = csv.DictWriter(stream, fieldnames=TRACE_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(trace_rows(report))


def read_trace_csv(stream) -> list[dict]:
    reader = csv.DictReader(stream)
    if tuple(reader.fieldnames or ()) != TRACE_FIELDS:
        raise ValueError(f"unexpected trace header {reader.fieldnames}")
    return list(reader)


def write_output(report: SolveReport, spec: RunSpec, path) -> None:
    with open(path, "w", newline="") as fh:
        if spec.fmt == "json":
            trace = [dict(asdict(r), events=list(r.events)) for r in report.trace]
            json.dump({"trace": trace, "summary": summary(report, spec)}, fh, indent=1)
            fh.write("\n")
        else:
            write_trace_csv(report, fh)


def exit_code(report: SolveReport) -> int:
    if report.stop_reason is StopReason.CONVERGED:
        return EXIT_OK
    if report.stop_reason is StopReason.NUMERICAL_BREAKDOWN:
        return EXIT_ERROR
    return EXIT_EARLY


def run_spec(spec: RunSpec) -> tuple[SolveReport, dict]:
    spec.validate()
    report = minimize(build_problem(spec), spec.config())
    if spec.out:
        write_output(report, spec, spec.out)
    return report, summary(report, spec)


def cmd_solve(spec: RunSpec, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        report, row = run_spec(spec)
    except (UsageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    writer = csv.DictWriter(stdout, fieldnames=list(row), lineterminator="\n")
    writer.writeheader()
    writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return exit_code(report)


_SPEC_TYPES = {f.name: f.type for f in fields(RunSpec)}
_SUITE_KEYS = {"lambda": "lam", "max-q": "max_q", "max-time": "max_time", "max-iter": "max_iter", "format": "fmt"}


def parse_suite(text: str) -> list[RunSpec]:
    """One run per line as ``key=value`` tokens; ``#`` starts a comment.

    ``method=a,b`` expands to one run per method.
    """
    specs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = shlex.split(line, comments=True)
        if not tokens:
            continue
        kw = {}
        for tok in tokens:
            key, sep, val = tok.partition("=")
            key = _SUITE_KEYS.get(key, key.replace("-", "_"))
            if not sep or key not in _SPEC_TYPES or key == "out":
                raise UsageError(f"suite line {lineno}: bad entry {tok!r}")
            kw[key] = val
        for method in kw.pop("method", Method.INVERSE_QUNAC.value).split(","):
            try:
                spec = RunSpec(method=method, **{k: _coerce(k, v) for k, v in kw.items()})
                specs.append(spec.validate())
            except (UsageError, ValueError) as exc:
                raise UsageError(f"suite line {lineno}: {exc}") from None
    return specs


def _coerce(key, val):
    kind = _SPEC_TYPES[key]
    if "bool" in kind:
        return val.lower() in ("1", "true", "yes", "on")
    if "int" in kind:
        return int(val)
    if "float" in kind:
        return float(val)
    return val


def _bench_one(spec: RunSpec) -> dict:
    try:
        report, row = run_spec(spec)
    except Exception as exc:  # recorded in the table, never aborts the suite
        return {"problem": spec.label, "method": spec.method, "cell": "ERR", "error": f"{type(exc).__name__}: {exc}"}
    mark = CELL_MARKS.get(report.stop_reason)
    row["cell"] = mark or f"{report.seconds:.3f}"
    return row


def bench_table(rows: list[dict]) -> str:
    problems = list(dict.fromkeys(r["problem"] for r in rows))
    methods = list(dict.fromkeys(r["method"] for r in rows))
    cells = {(r["problem"], r["method"]): r["cell"] for r in rows}
    width = max(len("problem"), *(len(p) for p in problems))
    cols = [max(len(m), 8) for m in methods]
    lines = ["  ".join(["problem".ljust(width)] + [m.rjust(c) for m, c in zip(methods, cols)])]
    for p in problems:
        lines.append("  ".join([p.ljust(width)] + [cells.get((p, m), "-").rjust(c) for m, c in zip(methods, cols)]))
    return "\n".join(lines)


def cmd_bench(suite_path, workers: int = 1, trace_dir=None, fmt: str = "csv", json_out=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        specs = parse_suite(Path(suite_path).read_text())
    except (OSError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if trace_dir:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
        for i, spec in enumerate(specs):
            stem = f"{i:03d}_{spec.label}_{spec.method}".replace("/", "_").replace("|", "_").replace(":", "-")
            spec.out, spec.fmt = str(Path(trace_dir) / f"{stem}.{fmt}"), fmt
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_bench_one, specs))
    else:
        rows = [_bench_one(s) for s in specs]
    print(bench_table(rows), file=stdout)
    for r in rows:
        if "error" in r:
            print(f"# {r['problem']} / {r['method']}: {r['error']}", file=stdout)
    if json_out:
        Path(json_out).write_text(json.dumps(rows, indent=1) + "\n")
    return EXIT_OK if all(r.get("stop_reason") == StopReason.CONVERGED.value for r in rows) else EXIT_EARLY


def cmd_selftest(seed: int = 0, only=None, stdout=None) -> int:
    from .checks import CHECKS, run_checks

    stdout = stdout or sys.stdout
    unknown = [n for n in only or () if n not in CHECKS]
    if unknown:
        print(f"error: unknown check(s) {', '.join(unknown)}; available: {', '.join(CHECKS)}", file=sys.stderr)
        return EXIT_ERROR
    t0 = time.perf_counter()
    results = run_checks(seed, only)
    for r in results:
        print(r.line(), file=stdout)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} properties passed in {time.perf_counter() - t0:.1f}s"
          + (f"; failed: {', '.join(failed)}" if failed else ""), file=stdout)
    return EXIT_OK if not failed else EXIT_ERROR


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qunac", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="run one minimization and write its trace")
    sel = s.add_mutually_exclusive_group(required=True)
    sel.add_argument("--problem", help="built-in problem as name:size (hilbert, tridiag, rosenbrock, powell)")
    sel.add_argument("--data", help="LIBSVM file, or synthetic[:MxN] for generated data")
    s.add_argument("--reg", default="l2", help="l2 or huber")
    s.add_argument("--lambda", dest="lam", type=float, default=1.0)
    s.add_argument("--mu", type=float, default=0.1)
    s.add_argument("--method", default=Method.INVERSE_QUNAC.value, help=", ".join(m.value for m in Method))
    s.add_argument("--eps", type=float)
    s.add_argument("--max-q", type=int)
    s.add_argument("--memory", type=int, help="L-BFGS pairs (defaults to max-q)")
    s.add_argument("--max-time", type=float, help="seconds")
    s.add_argument("--max-iter", type=int)
    s.add_argument("--reset", action="store_true", help="reset the estimate when the direction is not descent")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="trace output path")
    s.add_argument("--format", dest="fmt", default="csv", help="csv or json")

    b = sub.add_parser("bench", help="run a suite file and print a problems x methods table")
    b.add_argument("suite")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--trace-dir")
    b.add_argument("--format", dest="fmt", default="csv")
    b.add_argument("--json", dest="json_out", help="also write per-run summaries as JSON")

    t = sub.add_parser("selftest", help="run the randomized property checks")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--only", nargs="*")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.command == "solve":
        kw = {k: v for k, v in vars(args).items() if k not in ("command", "verbose")}
        return cmd_solve(RunSpec(**kw))
    if args.command == "bench":
        return cmd_bench(args.suite, args.workers, args.trace_dir, args.fmt, args.json_out)
    return cmd_selftest(args.seed, args.only)


if __name__ == "__main__":
    sys.exit(main())
