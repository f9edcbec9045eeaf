"""Command-line front end.

Exit codes: the program's own exit status for ``run`` (0 on a clean exit),
101 when a run traps, 139 on a segmentation fault, 2 for usage errors and bad
input files, 3 when the report cannot be written.  ``corpus`` exits 1 if any
entry disagrees with the expectations in its manifest.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import IrError, LinkError
from .harness import RunReport, emit_report, run_corpus
from .instrument import Mode, PassConfig, instrument
from .interp import DEFAULT_STEP_BUDGET, Exited, Segfault, Trapped, run
from .ir import parse, pretty_print

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_TRAP = 101
EXIT_SEGV = 139


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="satmem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--codec", choices=["buddy", "floating"], default="buddy")
        p.add_argument("--address-tagging", action="store_true",
                       help="rely on the memory unit ignoring tag bits; skip dereference strips")
        p.add_argument("--report", type=Path, help="write a JSON report here")
        p.add_argument("--budget", type=int, default=DEFAULT_STEP_BUDGET, help="step budget")

    p_run = sub.add_parser("run", help="instrument and execute a .sir program")
    p_run.add_argument("file", type=Path)
    p_run.add_argument("--mode", choices=[m.value for m in Mode], default="saturate")
    p_run.add_argument("--stats", action="store_true", help="print and report execution counters")
    p_run.add_argument("--input", type=Path, help="file whose bytes feed read_byte")
    p_run.add_argument("--emit-ir", action="store_true", help="print the instrumented IR to stderr")
    common(p_run)

    p_corpus = sub.add_parser("corpus", help="run a corpus directory with a manifest")
    p_corpus.add_argument("dir", type=Path)
    p_corpus.add_argument("--mode", action="append", choices=[m.value for m in Mode],
                          help="restrict to these modes (default: all four)")
    common(p_corpus)

    p_check = sub.add_parser("check", help="parse and validate only")
    p_check.add_argument("file", type=Path)
    return parser


def _write_report(path: Path | None, text: str) -> int | None:
    if path is None:
        return None
    try:
        path.write_text(text)
    except OSError as exc:
        print(f"satmem: cannot write report: {exc}", file=sys.stderr)
        return EXIT_IO
    return None


def _load(path: Path):
    try:
        return parse(path.read_text())
    except OSError as exc:
        print(f"satmem: {exc}", file=sys.stderr)
    except IrError as exc:
        for d in exc.diagnostics:
            print(f"{path}:{d}", file=sys.stderr)
    return None


def _cmd_check(args) -> int:
    program = _load(args.file)
    if program is None:
        return EXIT_USAGE
    print(f"{args.file}: ok ({len(program.functions)} functions)")
    return 0


def _cmd_run(args) -> int:
    program = _load(args.file)
    if program is None:
        return EXIT_USAGE
    data = b""
    if args.input is not None:
        try:
            data = args.input.read_bytes()
        except OSError as exc:
            print(f"satmem: {exc}", file=sys.stderr)
            return EXIT_USAGE
    cfg = PassConfig(mode=args.mode, codec=args.codec, address_tagging=args.address_tagging)
    instrumented = instrument(program, cfg).program
    if args.emit_ir:
        sys.stderr.write(pretty_print(instrumented))
    try:
        outcome = run(instrumented, cfg, data, step_budget=args.budget)
    except LinkError as exc:
        print(f"satmem: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sys.stdout.buffer.write(outcome.output)
    sys.stdout.flush()
    status = outcome.status
    if isinstance(status, Trapped):
        print(f"satmem: trapped ({status.reason}) at {status.instr}", file=sys.stderr)
    elif isinstance(status, Segfault):
        print(f"satmem: segmentation fault at {status.addr:#x}", file=sys.stderr)
    if args.stats:
        for key, value in outcome.stats.to_dict().items():
            print(f"{key}: {value}", file=sys.stderr)
    report = RunReport(args.file.stem, cfg, outcome, include_stats=args.stats)
    failed = _write_report(args.report, emit_report(report))
    if failed is not None:
        return failed
    if isinstance(status, Exited):
        return status.code & 0xFF
    return EXIT_TRAP if isinstance(status, Trapped) else EXIT_SEGV


def _cmd_corpus(args) -> int:
    modes = [Mode(m) for m in args.mode] if args.mode else None
    try:
        kwargs = {"codec": args.codec, "address_tagging": args.address_tagging, "step_budget": args.budget}
        report = run_corpus(args.dir, modes, **kwargs) if modes else run_corpus(args.dir, **kwargs)
    except FileNotFoundError as exc:
        print(f"satmem: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for entry, run_report in report.entries:
        print(f"{entry.name:28s} {entry.category.value:18s} {run_report.cfg.mode.value:9s} "
              f"{type(run_report.outcome.status).__name__:8s} {run_report.verdict.value}")
    failures = report.failures()
    for line in failures:
        print(f"MISMATCH {line}", file=sys.stderr)
    failed = _write_report(args.report, emit_report(report))
    if failed is not None:
        return failed
    return 1 if failures else 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "corpus": _cmd_corpus, "check": _cmd_check}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
