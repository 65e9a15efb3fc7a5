import argparse
import json
import logging
import sys
from pathlib import Path

from packedadt.bench.experiment import BenchSpec, geomean_speedup, run_grid, soft_checks
from packedadt.bench.report import FORMATS, emit_report
from packedadt.errors import FuzzFailure, InvalidArgument, PackedAdtError, SchemaError, TypecheckFailed, UnknownSuite
from packedadt.layout.container import export_container, import_container, read_header
from packedadt.layout.reader import deserialize
from packedadt.layout.values import check_value, dump_values, load_values
from packedadt.layout.writer import serialize, serialize_shared
from packedadt.regions.runtime import RegionStore
from packedadt.schema.adt import AdtSchema, Layout, parse_schema
from packedadt.schema.shape import buffer_shape
from packedadt.socal.checker import typecheck
from packedadt.socal.fuzz import fuzz_negative_control, fuzz_type_safety
from packedadt.socal.machine import interpret
from packedadt.socal.parser import parse_socal
from packedadt.traversal import catalog
from packedadt.traversal.passes import CursorMode

logger = logging.getLogger(__name__)

USAGE_EXIT = 1
LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _comma_list(convert):
    def parse(text: str):
        items = [item for item in text.split(",") if item.strip()]
        if not items:
            raise ValueError("expected a comma separated list")
        return tuple(convert(item.strip()) for item in items)
    return parse


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _schema(path: str) -> AdtSchema:
    return parse_schema(_read_text(path))


def _print_trace(trace) -> None:
    for entry in trace:
        print(json.dumps(entry.to_json()))


def schema_check(args) -> int:
    schema = _schema(args.file)
    for dt in schema.datatypes:
        shape = buffer_shape(schema, dt.name)
        print(f"{dt.name}\t{dt.layout.keyword()}\t{shape.buffer_count} buffers\t{' '.join(shape.roles())}")
    return 0


def pack(args) -> int:
    schema = _schema(args.schema)
    if args.layout is not None:
        schema = schema.with_layouts({args.type: args.layout})
    values = load_values(_read_text(args.input))
    if len(values) != 1:
        raise InvalidArgument(f"pack takes exactly one value, {args.input} holds {len(values)}")
    value = values[0]
    check_value(schema, args.type, value)
    store = RegionStore()
    if args.indirection:
        root = serialize_shared(schema, args.type, value, store, random_access=args.random_access)
    else:
        root = serialize(schema, args.type, value, store, random_access=args.random_access)
    data = export_container(root)
    Path(args.out).write_bytes(data)
    logger.info("wrote %d bytes to %s", len(data), args.out)
    return 0


def _schema_for_container(schema: AdtSchema, layout: Layout, schema_hash: int, datatype: str | None) -> AdtSchema:
    """The schema as written, or with one datatype switched to the file's layout"""
    if schema.schema_hash() == schema_hash:
        return schema
    names = [datatype] if datatype else [dt.name for dt in schema.datatypes]
    for name in names:
        try:
            candidate = schema.with_layouts({name: layout})
        except SchemaError:
            continue
        if candidate.schema_hash() == schema_hash:
            return candidate
    return schema


def unpack(args) -> int:
    schema = _schema(args.schema)
    data = Path(args.file).read_bytes()
    layout, _, schema_hash = read_header(data)
    schema = _schema_for_container(schema, layout, schema_hash, args.type)
    root = import_container(data, schema, args.type)
    print(dump_values([deserialize(root)]))
    return 0


def socal_check(args) -> int:
    program = parse_socal(_read_text(args.file))
    result = typecheck(program)
    if args.trace:
        _print_trace(result.trace)
    if not result.accepted:
        raise TypecheckFailed(result.rejection)
    if not args.trace:
        print("accepted")
    return 0


def socal_run(args) -> int:
    program = parse_socal(_read_text(args.file))
    if args.check:
        result = typecheck(program)
        if not result.accepted:
            raise TypecheckFailed(result.rejection)
    run = interpret(program, trace=args.trace, check=args.check)
    if args.trace:
        _print_trace(run.trace)
    decoded = run.decoded()
    print(json.dumps(decoded if isinstance(decoded, int) else decoded.to_json()))
    return 0


def socal_fuzz(args) -> int:
    extra = parse_socal(_read_text(args.file)).schema if args.file else None
    if args.negative_control:
        rejected = fuzz_negative_control(args.seed, args.count)
        print(json.dumps({"seed": args.seed, "count": args.count, "rejected": rejected}))
        return 0
    try:
        summary = fuzz_type_safety(args.seed, args.count, extra)
    except FuzzFailure as e:
        if getattr(e, "summary", None) is not None:
            print(json.dumps(e.summary.to_json()))
        raise
    print(json.dumps(summary.to_json()))
    return 0


def bench_run(args) -> int:
    suites = catalog.builtin_passes()
    specs = []
    for suite_name in args.suite:
        if suite_name not in suites:
            raise UnknownSuite(f"unknown suite {suite_name!r}; known: {', '.join(suites)}")
        for pass_name in args.passes or suites[suite_name].passes:
            suites[suite_name].lookup(pass_name)
            specs.append(BenchSpec(
                suite=suite_name,
                pass_name=pass_name,
                sizes=tuple(sorted(args.sizes)),
                layouts=args.layouts,
                modes=args.modes,
                repetitions=args.reps,
                seed=args.seed,
                cap=args.cap,
            ))
    rows = run_grid(specs, args.jobs)
    print(emit_report(rows, args.format))
    if args.check:
        for check in soft_checks(rows):
            print(check, file=sys.stderr)
        geomean = geomean_speedup(rows)
        if geomean is not None:
            print(f"geometric mean S_fo {geomean:.2f}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="packedadt", description="Serialized algebraic datatypes in flat and factored layouts")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG on stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    schema = commands.add_parser("schema", help="schema files").add_subparsers(dest="action", required=True)
    check = schema.add_parser("check", help="validate a .adt file and list its buffers")
    check.add_argument("file")
    check.set_defaults(handler=schema_check)

    packer = commands.add_parser("pack", help="serialize values.json into a container file")
    packer.add_argument("--schema", required=True)
    packer.add_argument("--type", required=True)
    packer.add_argument("--layout", type=Layout.parse, default=None)
    packer.add_argument("--input", required=True)
    packer.add_argument("--out", required=True)
    packer.add_argument("--random-access", action="store_true")
    packer.add_argument("--indirection", action="store_true", help="write repeated subvalues once")
    packer.set_defaults(handler=pack)

    unpacker = commands.add_parser("unpack", help="print the value in a container file as JSON")
    unpacker.add_argument("--schema", required=True)
    unpacker.add_argument("--type", default=None)
    unpacker.add_argument("file")
    unpacker.set_defaults(handler=unpack)

    socal = commands.add_parser("socal", help="location calculus programs").add_subparsers(dest="action", required=True)
    socal_checker = socal.add_parser("check", help="typecheck a .socal program")
    socal_checker.add_argument("file")
    socal_checker.add_argument("--trace", action="store_true", help="JSON lines of rule, e, A, N, C_delta")
    socal_checker.set_defaults(handler=socal_check)
    runner = socal.add_parser("run", help="evaluate main on the store semantics")
    runner.add_argument("file")
    runner.add_argument("--trace", action="store_true")
    runner.add_argument("--no-check", dest="check", action="store_false",
                        help="skip typechecking and the well-formedness monitor")
    runner.set_defaults(handler=socal_run)
    fuzzer = socal.add_parser("fuzz", help="generate programs and check type safety")
    fuzzer.add_argument("file", nargs="?", default=None, help="extra data declarations")
    fuzzer.add_argument("--seed", type=int, default=0)
    fuzzer.add_argument("--count", type=int, default=1000)
    fuzzer.add_argument("--negative-control", action="store_true",
                        help="generate ill-typed programs that must all be rejected")
    fuzzer.set_defaults(handler=socal_fuzz)

    bench = commands.add_parser("bench", help="benchmarks").add_subparsers(dest="action", required=True)
    bench_runner = bench.add_parser("run", help="time passes over generated inputs")
    bench_runner.add_argument("--suite", type=_comma_list(str), required=True)
    bench_runner.add_argument("--pass", dest="passes", type=_comma_list(str), default=None)
    bench_runner.add_argument("--sizes", type=_comma_list(int), default=(10_000, 100_000, 1_000_000))
    bench_runner.add_argument("--layouts", type=_comma_list(Layout.parse), default=(Layout.FLAT, Layout.FACTORED))
    bench_runner.add_argument("--modes", type=_comma_list(CursorMode.parse),
                              default=(CursorMode.IMMUTABLE, CursorMode.MUTABLE))
    bench_runner.add_argument("--reps", type=int, default=5)
    bench_runner.add_argument("--seed", type=int, default=0)
    bench_runner.add_argument("--cap", type=int, default=None, help="traversal work-stack cap")
    bench_runner.add_argument("--format", choices=FORMATS, default="table")
    bench_runner.add_argument("--jobs", type=int, default=1)
    bench_runner.add_argument("--check", action="store_true", help="print soft speedup checks to stderr")
    bench_runner.set_defaults(handler=bench_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return USAGE_EXIT
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 0
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format=LOG_FORMAT, force=True)
    try:
        return args.handler(args)
    except PackedAdtError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_EXIT
