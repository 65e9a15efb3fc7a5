import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from time import perf_counter

import numpy as np

from packedadt import config
from packedadt.bench.generators import generate
from packedadt.errors import InvalidArgument, RuntimeFault
from packedadt.layout.writer import serialize
from packedadt.regions.runtime import RegionStore
from packedadt.schema.adt import Layout
from packedadt.traversal import catalog
from packedadt.traversal.engine import TraversalReport, run_fold, run_map
from packedadt.traversal.passes import CursorMode, PassKind

logger = logging.getLogger(__name__)

DEFAULT_SIZES = (10_000, 100_000, 1_000_000)
MIN_REPETITIONS = 3
OK = "ok"

# (suite, pass, column, threshold) of the wall-time acceptance checks
SOFT_THRESHOLDS = (
    ("LinearListReduction", "reduce", "S_fo", 3.0),
    ("ReduceNestedList", "reduce", "S_fo", 4.0),
    ("MonoTree", "sumTree", "S_gm", 1.1),
)


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class BenchSpec:
    """One (suite, pass) cell swept over sizes, layouts and cursor modes"""
    suite: str
    pass_name: str
    sizes: tuple[int, ...] = DEFAULT_SIZES
    layouts: tuple[Layout, ...] = (Layout.FLAT, Layout.FACTORED)
    modes: tuple[CursorMode, ...] = (CursorMode.IMMUTABLE, CursorMode.MUTABLE)
    repetitions: int = 5
    seed: int = 0
    cap: int | None = None

    def __post_init__(self):
        if not self.sizes:
            raise InvalidArgument("a benchmark needs at least one size")
        if list(self.sizes) != sorted(self.sizes):
            raise InvalidArgument(f"sizes must be ascending, got {list(self.sizes)}")
        if self.repetitions < MIN_REPETITIONS:
            raise InvalidArgument(f"timing needs at least {MIN_REPETITIONS} repetitions, got {self.repetitions}")
        if not self.layouts or not self.modes:
            raise InvalidArgument("a benchmark needs at least one layout and one mode")


@dataclass(slots=True)
class BenchRow:
    suite: str
    pass_name: str
    size: int
    layout: str
    mode: str
    nodes: int = 0
    status: str = OK
    detail: str = ""
    median_ns: float | None = None
    min_ns: int | None = None
    roles: list[str] = field(default_factory=list)
    bytes_read: list[int] = field(default_factory=list)
    bytes_skipped: list[int] = field(default_factory=list)
    bytes_written: list[int] = field(default_factory=list)
    steps: int = 0
    bundle_copies: int = 0
    max_stack: int = 0
    dead_fraction: float = 0.0
    S_fo: float | None = None
    S_fb: float | None = None
    S_gm: float | None = None

    @property
    def bytes_read_total(self) -> int:
        return sum(self.bytes_read)

    @property
    def variant(self) -> tuple[str, str]:
        return self.layout, self.mode

    def to_record(self) -> dict:
        return {
            "suite": self.suite,
            "pass": self.pass_name,
            "size": self.size,
            "layout": self.layout,
            "mode": self.mode,
            "median_ns": self.median_ns,
            "S_fo": self.S_fo,
            "S_fb": self.S_fb,
            "S_gm": self.S_gm,
            "dead_fraction": self.dead_fraction,
            "bytes_read_total": self.bytes_read_total,
            "min_ns": self.min_ns,
            "nodes": self.nodes,
            "steps": self.steps,
            "bundle_copies": self.bundle_copies,
            "max_stack": self.max_stack,
            "bytes_read": self.bytes_read,
            "bytes_skipped": self.bytes_skipped,
            "bytes_written": self.bytes_written,
            "roles": self.roles,
            "status": self.status,
            "detail": self.detail,
        }


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class SoftCheck:
    suite: str
    pass_name: str
    size: int
    column: str
    threshold: float
    actual: float | None

    @property
    def verdict(self) -> str:
        if self.actual is None:
            return "WARN"
        return "PASS" if self.actual >= self.threshold else "WARN"

    def __str__(self) -> str:
        actual = "n/a" if self.actual is None else f"{self.actual:.2f}"
        return (f"{self.verdict} {self.suite}/{self.pass_name} size {self.size}: "
                f"{self.column} = {actual} (want >= {self.threshold})")


def _store() -> RegionStore:
    return RegionStore(first_chunk_size=config.first_chunk_size(config.BENCH_FIRST_CHUNK), check_writes=False)


def _traverse(schema, passdef, root, mode: CursorMode, cap: int | None) -> TraversalReport:
    if passdef.kind is PassKind.FOLD:
        return run_fold(schema, passdef, root, mode, cap)
    report = run_map(schema, passdef, root, _store(), mode, cap)
    report.result.drop()
    return report


def _measure(row: BenchRow, schema, passdef, root, mode: CursorMode, spec: BenchSpec) -> None:
    try:
        # warmup, excluded from the timings
        _traverse(schema, passdef, root, mode, spec.cap)
        reports = [_traverse(schema, passdef, root, mode, spec.cap) for _ in range(spec.repetitions)]
    except RuntimeFault as e:
        row.status = type(e).__name__
        row.detail = str(e)
        logger.info("%s/%s size %d %s/%s: %s", row.suite, row.pass_name, row.size, row.layout, row.mode, row.status)
        return
    timings = np.array([r.wall_ns for r in reports], dtype=np.int64)
    row.median_ns = float(np.median(timings))
    row.min_ns = int(np.min(timings))
    first = reports[0]
    row.roles = list(first.roles)
    row.bytes_read = list(first.bytes_read)
    row.bytes_skipped = list(first.bytes_skipped)
    row.bytes_written = list(first.bytes_written)
    row.steps = first.steps
    row.bundle_copies = first.bundle_copies
    row.max_stack = first.max_stack
    row.dead_fraction = first.dead_field_fraction


def _ratio(numerator: BenchRow | None, denominator: BenchRow | None) -> float | None:
    if numerator is None or denominator is None:
        return None
    if numerator.median_ns is None or denominator.median_ns is None or denominator.median_ns <= 0:
        return None
    return numerator.median_ns / denominator.median_ns


def attach_speedups(rows: list[BenchRow]) -> None:
    """
    Fill the speedup columns of every row from the medians of its (suite, pass, size) group.

    S_fo is flat-mutable over factored-mutable, S_fb flat-immutable over
    factored-mutable and S_gm flat-immutable over flat-mutable.
    """
    groups: dict[tuple, dict[tuple[str, str], BenchRow]] = {}
    for row in rows:
        groups.setdefault((row.suite, row.pass_name, row.size), {})[row.variant] = row
    for variants in groups.values():
        gm = variants.get(("flat", "mutable"))
        gi = variants.get(("flat", "immutable"))
        f = variants.get(("factored", "mutable"))
        s_fo, s_fb, s_gm = _ratio(gm, f), _ratio(gi, f), _ratio(gi, gm)
        for row in variants.values():
            row.S_fo, row.S_fb, row.S_gm = s_fo, s_fb, s_gm


def run_experiment(spec: BenchSpec) -> list[BenchRow]:
    """
    Time one pass over every (size, layout, mode) cell of ``spec``.

    Each input is generated once per size and serialized once per layout into
    a store with write checks off; serialization is not timed. Each cell runs
    one warmup and ``spec.repetitions`` timed traversals, and counters come
    from the first timed run. Runtime faults such as ``StackDepthExceeded``
    end up in the row's ``status`` instead of aborting the sweep.

    :param spec: The grid to run
    :return: One row per cell, speedup columns filled in
    """
    suite, passdef = catalog.lookup(spec.suite, spec.pass_name)
    modes = spec.modes
    if not config.Features.from_env().mutable_cursors and CursorMode.MUTABLE in modes:
        logger.warning("mutable cursors are disabled; running %s/%s immutable only", spec.suite, spec.pass_name)
        modes = (CursorMode.IMMUTABLE,)
    rows: list[BenchRow] = []
    for size in spec.sizes:
        value = generate(spec.suite, size, spec.seed)
        nodes = value.node_count()
        for layout in spec.layouts:
            schema = suite.schema(layout)
            start = perf_counter()
            root = serialize(schema, suite.datatype, value, _store(), random_access=False)
            logger.debug("serialized %s size %d (%s) in %.3fs", spec.suite, size, layout.name.lower(),
                         perf_counter() - start)
            for mode in modes:
                row = BenchRow(spec.suite, spec.pass_name, size, layout.name.lower(), mode.value, nodes)
                _measure(row, schema, passdef, root, mode, spec)
                rows.append(row)
                logger.info("%s/%s size %d %s/%s median %s ns", spec.suite, spec.pass_name, size,
                            row.layout, row.mode, row.median_ns)
            root.drop()
    attach_speedups(rows)
    return rows


def run_grid(specs: list[BenchSpec], jobs: int = 1) -> list[BenchRow]:
    """Run several cells, in worker processes when ``jobs`` > 1; rows keep the order of ``specs``"""
    if jobs < 1:
        raise InvalidArgument(f"jobs must be at least 1, got {jobs}")
    if jobs == 1 or len(specs) < 2:
        return [row for spec in specs for row in run_experiment(spec)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return [row for rows in pool.map(run_experiment, specs) for row in rows]


def soft_checks(rows: list[BenchRow]) -> list[SoftCheck]:
    """
    Wall-time checks against the acceptance thresholds, at the largest size run.

    Timing is machine-specific, so a miss is a WARN, never a failure.
    """
    checks = []
    for suite, pass_name, column, threshold in SOFT_THRESHOLDS:
        matching = [r for r in rows if r.suite == suite and r.pass_name == pass_name]
        if not matching:
            continue
        largest = max(r.size for r in matching)
        row = next(r for r in matching if r.size == largest)
        checks.append(SoftCheck(suite, pass_name, largest, column, threshold, getattr(row, column)))
    return checks


def geomean_speedup(rows: list[BenchRow]) -> float | None:
    """Geometric mean of S_fo over the distinct (suite, pass, size) groups that have it"""
    seen = {}
    for row in rows:
        if row.S_fo is not None:
            seen[(row.suite, row.pass_name, row.size)] = row.S_fo
    if not seen:
        return None
    return float(np.exp(np.mean(np.log(list(seen.values())))))
