import argparse
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from stratal.config import StratalSettings, SystemMode
from stratal.corpus import CorpusRunner
from stratal.errors import ParseError, SimulationCounterexample, StratalError, TypingError
from stratal.interpreter import Terminated
from stratal.service import StratalService, format_outcome, trace_lines
from stratal.surface import Discipline
from stratal.syntax import format_judgement, pretty

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stratal", description="Check, run and transform region-calculus programs")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--prelude", choices=["int"], default=None, help="Enable the integer extension")

    subparsers = parser.add_subparsers(dest="command", required=True)

    check = subparsers.add_parser("check", parents=[common], help="Print the judgement of a program")
    check.add_argument("file")
    check.add_argument("--system", choices=[m.value for m in SystemMode], default=None)
    check.add_argument("--no-subsumption", action="store_true", help="Replace subtyping by type equality")
    check.add_argument("--json", action="store_true", help="Print diagnostics as JSON records")

    for name, text in (("run", "Run a program"), ("trace", "Run a program and emit a JSON-lines trace")):
        sub = subparsers.add_parser(name, parents=[common], help=text)
        sub.add_argument("file")
        sub.add_argument("--system", choices=[m.value for m in SystemMode], default=None)
        sub.add_argument("--fuel", type=int, default=None)
        sub.add_argument("--instants", type=int, default=None)
        schedule = sub.add_mutually_exclusive_group()
        schedule.add_argument("--seed", type=int, default=None)
        schedule.add_argument("--all-schedules", action="store_true", help="Explore every interleaving")
        sub.add_argument("--budget", type=int, default=None, help="State budget of --all-schedules")
        if name == "trace":
            sub.add_argument("--out", default=None, help="Write the trace to this file instead of stdout")

    for name, text in (("translate", "Eliminate else-next"), ("expand", "Expand ref and fix macros")):
        sub = subparsers.add_parser(name, parents=[common], help=text)
        sub.add_argument("file")

    simulate = subparsers.add_parser("simulate", parents=[common], help="Check a store discipline against regions")
    simulate.add_argument("file")
    simulate.add_argument("--discipline", choices=[d.value for d in Discipline], required=True)
    simulate.add_argument("--budget", type=int, default=None)

    corpus = subparsers.add_parser("corpus", parents=[common], help="Run every program of a directory")
    corpus.add_argument("directory")
    return parser


def _judgement(service: StratalService, args: argparse.Namespace) -> int:
    source = service.load(args.file, args.prelude)
    mode = SystemMode(args.system) if args.system else None
    try:
        pair = service.check(source, mode, subsumption=not args.no_subsumption)
    except TypingError as e:
        print(e.to_record().model_dump_json() if args.json else str(e))
        return EXIT_FAILED
    print(format_judgement(*pair))
    return EXIT_OK


def _run(service: StratalService, args: argparse.Namespace) -> int:
    source = service.load(args.file, args.prelude)
    if args.system:
        try:
            service.check(source, SystemMode(args.system))
        except TypingError as e:
            print(f"warning: not typable in the {args.system} system: {e}", file=sys.stderr)
    cfg = service.run_config(
        fuel=args.fuel, instants=args.instants, seed=args.seed, exhaustive=args.all_schedules, budget=args.budget
    )
    result = service.run(source, cfg)
    if args.command == "trace":
        lines = trace_lines(result)
        if args.out:
            Path(args.out).write_text(lines, encoding="utf-8")
            print(format_outcome(result))
        else:
            sys.stdout.write(lines)
            print(format_outcome(result), file=sys.stderr)
    else:
        print(format_outcome(result))
    return EXIT_OK if isinstance(result.outcome, Terminated) else EXIT_FAILED


def _transform(service: StratalService, args: argparse.Namespace) -> int:
    source = service.load(args.file, args.prelude)
    result = service.translate(source) if args.command == "translate" else service.expand(source)
    sys.stdout.write(pretty(result))
    return EXIT_OK


def _simulate(service: StratalService, args: argparse.Namespace) -> int:
    source = service.load(args.file, args.prelude)
    try:
        report = service.simulate(source, Discipline(args.discipline), args.budget)
    except SimulationCounterexample as e:
        print(str(e))
        if e.report is not None:
            print(e.report.model_dump_json(indent=2))
        return EXIT_FAILED
    print(report.model_dump_json(indent=2))
    return EXIT_OK if report.ok else EXIT_FAILED


def _corpus(service: StratalService, args: argparse.Namespace) -> int:
    if not Path(args.directory).is_dir():
        print(f"not a directory: {args.directory}", file=sys.stderr)
        return EXIT_USAGE
    results = CorpusRunner(service).run_dir(args.directory)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.file}: {r.expectation} -> {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed} passed, {failed} failed")
    return EXIT_FAILED if failed else EXIT_OK


COMMANDS = {
    "check": _judgement,
    "run": _run,
    "trace": _run,
    "translate": _transform,
    "expand": _transform,
    "simulate": _simulate,
    "corpus": _corpus,
}


def cli(argv: list[str] | None = None) -> int:
    """Run one command and return its exit code."""
    try:
        settings = StratalSettings()
    except ValidationError as e:
        print(f"invalid STRATAL_ settings: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=settings.log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    if getattr(args, "prelude", None):
        settings = settings.model_copy(update={"prelude": args.prelude})
    service = StratalService(settings)
    logger.info(f"Running command {args.command}")
    try:
        return COMMANDS[args.command](service, args)
    except (OSError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TypingError as e:
        print(str(e))
        return EXIT_FAILED
    except StratalError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED


def main():
    """Entry point of the stratal command."""
    sys.exit(cli())


if __name__ == "__main__":
    main()
