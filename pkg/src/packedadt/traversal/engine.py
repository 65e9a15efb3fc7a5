import logging
from dataclasses import dataclass, field
from time import perf_counter_ns

from packedadt import config
from packedadt.errors import CorruptTag, IntegerOutOfRange, PassDefinitionError, StackDepthExceeded
from packedadt.layout.plan import CtorPlan, ShapePlan, Slot, compile_plan
from packedadt.layout.root import CursorBundle, SerializedRoot
from packedadt.layout.values import INT64_MAX, INT64_MIN, Value
from packedadt.regions.address import ADDRESS_WIDTH, RECORD_WIDTH, Address, ReservedTag
from packedadt.regions.runtime import RegionStore
from packedadt.schema.adt import AdtSchema
from packedadt.traversal.passes import Clause, CursorMode, FoldStyle, PassDef, PassKind

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class TraversalReport:
    """Result and deterministic counters of one traversal"""
    pass_name: str
    datatype: str
    layout: str
    mode: CursorMode
    roles: list[str]
    result: object = None
    bytes_read: list[int] = field(default_factory=list)
    bytes_skipped: list[int] = field(default_factory=list)
    bytes_written: list[int] = field(default_factory=list)
    steps: int = 0
    bundle_copies: int = 0
    max_stack: int = 0
    wall_ns: int = 0
    dead_field_fraction: float = 0.0
    end: CursorBundle | None = None
    n: int | None = None

    def to_json(self) -> dict:
        result = self.result
        if isinstance(result, SerializedRoot):
            result = {"datatype": result.datatype, "regions": result.regions}
        return {
            "pass": self.pass_name,
            "layout": self.layout,
            "mode": self.mode.value,
            "n": self.n,
            "result": result,
            "buffers": [
                {"role": role, "bytes_read": r, "bytes_written": w}
                for role, r, w in zip(self.roles, self.bytes_read, self.bytes_written)
            ],
            "steps": self.steps,
            "bundle_copies": self.bundle_copies,
            "wall_ns": self.wall_ns,
        }


def live_buffers(plan: ShapePlan, passdef: PassDef) -> set[int]:
    """Buffers a fold has to move through: tag streams of reached plans and their used scalar buffers"""
    live: set[int] = set()
    seen: set[int] = set()
    pending = [plan]
    while pending:
        p = pending.pop()
        if id(p) in seen:
            continue
        seen.add(id(p))
        live.add(p.base)
        for cp in p.ctors:
            clause = passdef.clause(cp.name)
            for j, fp in enumerate(cp.fields):
                used = clause.mask[j]
                if fp.kind is Slot.SCALAR:
                    if used:
                        live.add(fp.buffer)
                elif used:
                    pending.append(fp.child)
    return live


class _Engine:
    __slots__ = [
        "store", "live", "cursors", "cap", "mode",
        "read", "skipped", "written", "steps", "copies", "max_stack",
    ]

    def __init__(self, store: RegionStore, buffer_count: int, cursors: list[Address], live: set[int],
                 mode: CursorMode, cap: int):
        self.store = store
        self.live = live
        self.cursors = list(cursors)
        self.mode = mode
        self.cap = cap
        self.read = [0] * buffer_count
        self.skipped = [0] * buffer_count
        self.written = [0] * buffer_count
        self.steps = 0
        self.copies = 0
        self.max_stack = 0

    def check_depth(self, stack: list) -> None:
        depth = len(stack)
        if depth > self.max_stack:
            self.max_stack = depth
            if depth > self.cap:
                raise StackDepthExceeded(f"work stack passed the cap of {self.cap} frames")

    def copy_bundle(self) -> None:
        self.cursors = list(self.cursors)
        self.copies += 1

    def enter(self, p: ShapePlan) -> tuple[CtorPlan | None, Address | None]:
        """Read the tag of the node at the plan's tag cursor; (None, None) means an indirection"""
        store = self.store
        tag, at = store.tag_at(self.cursors[p.base])
        self.steps += 1
        if tag == ReservedTag.INDIR:
            return None, None
        slots = None
        if tag == ReservedTag.RANDOM_ACCESS:
            if p.ra_width == 0:
                raise CorruptTag(f"random-access record at {at} but {p.datatype} has no random-access slots")
            slots = at.advance(1)
            self.read[p.base] += p.ra_record_width
            self.skipped[p.base] += p.ra_record_width
            tag, at = store.tag_at(at.advance(p.ra_record_width))
            self.steps += 1
        if tag >= len(p.ctors):
            raise CorruptTag(f"byte {tag} at {at} is not a tag of {p.datatype}")
        self.read[p.base] += 1
        self.cursors[p.base] = at.advance(1)
        return p.ctors[tag], slots

    def follow(self, p: ShapePlan, buffers) -> list[tuple[int, Address]]:
        """Jump through an indirection in ``buffers``; returns where each cursor resumes afterwards"""
        after = []
        for b in p.buffers:
            if b not in buffers:
                continue
            target, past = self.store.load_record(self.cursors[b], ReservedTag.INDIR)
            self.read[b] += RECORD_WIDTH
            after.append((b, past))
            self.cursors[b] = target
        self.steps += 1
        return after

    def restore(self, after: list[tuple[int, Address]]) -> None:
        for b, addr in after:
            self.cursors[b] = addr

    def bump(self, b: int, units: int) -> None:
        self.cursors[b] = self.store.skip_units(self.cursors[b], 8, units)
        self.read[b] += 8 * units
        self.skipped[b] += 8 * units
        self.steps += 1

    def load(self, b: int) -> int:
        value, self.cursors[b] = self.store.load_int(self.cursors[b])
        self.read[b] += 8
        self.steps += 1
        return value

    def scalars(self, cp: CtorPlan, mask: tuple[bool, ...] | None) -> tuple[int, ...]:
        """Load used scalars in field order, bumping over unused ones that share a live buffer"""
        values = []
        run_buffer, run = None, 0
        for j in cp.scalars:
            b = cp.fields[j].buffer
            if mask is None or mask[j]:
                if run:
                    self.bump(run_buffer, run)
                    run = 0
                values.append(self.load(b))
            elif b in self.live:
                if run and run_buffer != b:
                    self.bump(run_buffer, run)
                    run = 0
                run_buffer = b
                run += 1
        if run:
            self.bump(run_buffer, run)
        return tuple(values)

    def jump(self, p: ShapePlan, slots: Address, cp: CtorPlan, target_field: int) -> None:
        """Position every live buffer of ``target_field`` at its start, read from a random-access record"""
        first = cp.ra_slots[target_field]
        for k, b in enumerate(cp.fields[target_field].child.buffers):
            if b in self.live:
                self.cursors[b] = self.store.load_address(slots.advance(ADDRESS_WIDTH * (first + k)))
                self.skipped[p.base] -= ADDRESS_WIDTH
        self.steps += 1

    def skip(self, plan: ShapePlan) -> None:
        """Move the live cursors past one value of ``plan`` without interpreting it"""
        store = self.store
        live = self.live
        pending = [plan]
        while pending:
            self.check_depth(pending)
            p = pending.pop()
            if not any(b in live for b in p.buffers):
                continue
            tag, at = store.tag_at(self.cursors[p.base])
            self.steps += 1
            if tag == ReservedTag.INDIR:
                for b in p.buffers:
                    if b in live:
                        _, self.cursors[b] = store.load_record(self.cursors[b], ReservedTag.INDIR)
                        self.read[b] += RECORD_WIDTH
                        self.skipped[b] += RECORD_WIDTH
                continue
            if tag == ReservedTag.RANDOM_ACCESS and p.ra_width:
                self.read[p.base] += p.ra_record_width
                self.skipped[p.base] += p.ra_record_width
                tag, at = store.tag_at(at.advance(p.ra_record_width))
                self.steps += 1
            if tag >= len(p.ctors):
                raise CorruptTag(f"byte {tag} at {at} is not a tag of {p.datatype}")
            self.read[p.base] += 1
            self.cursors[p.base] = at.advance(1)
            cp = p.ctors[tag]
            units: dict[int, int] = {}
            for j in cp.scalars:
                b = cp.fields[j].buffer
                if b in live:
                    units[b] = units.get(b, 0) + 1
            for b, count in units.items():
                self.bump(b, count)
            pending.extend(cp.fields[j].child for j in reversed(cp.packed))

    def end_bundle(self, plan: ShapePlan, only_live: bool) -> CursorBundle:
        return CursorBundle(
            self.cursors[b] if not only_live or b in self.live else None for b in range(plan.buffer_count)
        )


def _child_frames(engine: _Engine, p: ShapePlan, cp: CtorPlan, clause: Clause, slots, pruned: bool) -> list[tuple]:
    frames = []
    packed = cp.packed
    for idx, j in enumerate(packed):
        fp = cp.fields[j]
        if not pruned and clause.mask[j]:
            frames.append(("node", fp.child))
            continue
        if not any(b in engine.live for b in fp.child.buffers):
            continue
        nxt = packed[idx + 1] if idx + 1 < len(packed) else None
        if (
            slots is not None
            and nxt is not None
            and set(fp.child.buffers) <= set(cp.fields[nxt].child.buffers)
        ):
            frames.append(("jump", p, slots, cp, nxt))
        else:
            frames.append(("skip", fp.child))
    return frames


def run_fold(
    schema: AdtSchema,
    passdef: PassDef,
    root: SerializedRoot,
    mode: CursorMode = CursorMode.MUTABLE,
    cap: int | None = None,
) -> TraversalReport:
    """
    Fold ``passdef`` over the serialized value at ``root``.

    Parameters
    ----------
    schema : AdtSchema
        Schema the root was written with.
    passdef : PassDef
        A fold over the root's datatype.
    root : SerializedRoot
        Value to read.
    mode : CursorMode
        Mutable threads one bundle updated in place; Immutable copies it at every return.
    cap : int, optional
        Work-stack cap, PACKEDADT_DEPTH_CAP when omitted.

    Returns
    -------
    TraversalReport
        ``result`` is the fold value and ``end`` the end witness in every live buffer.
    """
    if passdef.kind is not PassKind.FOLD:
        raise PassDefinitionError(f"{passdef.name} is a {passdef.kind.value}, not a fold")
    if passdef.datatype != root.datatype:
        raise PassDefinitionError(f"{passdef.name} folds {passdef.datatype}, the root holds {root.datatype}")
    passdef.validate(schema)
    plan = compile_plan(schema, root.datatype)
    live = live_buffers(plan, passdef)
    engine = _Engine(root.store, plan.buffer_count, root.bundle.cursors, live, mode,
                     config.depth_cap() if cap is None else cap)
    structural = passdef.style is FoldStyle.STRUCTURAL
    immutable = mode is CursorMode.IMMUTABLE
    results: list = []
    acc = passdef.init
    started = perf_counter_ns()
    stack: list[tuple] = [("node", plan)]
    while stack:
        engine.check_depth(stack)
        item = stack.pop()
        kind = item[0]
        if kind == "node":
            p = item[1]
            cp, slots = engine.enter(p)
            if cp is None:
                stack.append(("restore", engine.follow(p, live)))
                stack.append(("node", p))
                continue
            clause = passdef.clause(cp.name)
            scalars = engine.scalars(cp, clause.mask)
            live_kids = sum(1 for j in cp.packed if clause.mask[j])
            pruned = False
            if structural:
                if clause.prune is not None:
                    outcome = clause.prune(scalars)
                    if outcome is not None:
                        pruned = True
                        results.append(outcome)
                if not pruned and not live_kids:
                    results.append(clause.combine(scalars, ()))
            elif clause.prune is not None and clause.prune(scalars, acc):
                pruned = True
            elif clause.step is not None:
                acc = clause.step(scalars, acc)
            frames = _child_frames(engine, p, cp, clause, slots, pruned)
            pending_combine = structural and not pruned and live_kids
            if immutable:
                stack.append(("ret", clause if pending_combine else None, scalars, live_kids))
            elif pending_combine:
                stack.append(("combine", clause, scalars, live_kids))
            stack.extend(reversed(frames))
        elif kind in ("combine", "ret"):
            _, clause, scalars, count = item
            if clause is not None:
                kids = tuple(results[len(results) - count:])
                del results[len(results) - count:]
                results.append(clause.combine(scalars, kids))
            if kind == "ret":
                engine.copy_bundle()
        elif kind == "restore":
            engine.restore(item[1])
        elif kind == "jump":
            _, p, slots, cp, target = item
            engine.jump(p, slots, cp, target)
        else:
            engine.skip(item[1])
    elapsed = perf_counter_ns() - started
    report = TraversalReport(
        pass_name=passdef.name,
        datatype=root.datatype,
        layout=root.layout.name.lower(),
        mode=mode,
        roles=plan.shape.roles(),
        result=results[0] if structural else acc,
        bytes_read=engine.read,
        bytes_skipped=engine.skipped,
        bytes_written=engine.written,
        steps=engine.steps,
        bundle_copies=engine.copies,
        max_stack=engine.max_stack,
        wall_ns=elapsed,
        dead_field_fraction=passdef.dead_field_fraction(schema),
        end=engine.end_bundle(plan, only_live=True),
    )
    logger.debug("%s over %s (%s, %s) finished in %d ns", passdef.name, root.datatype, report.layout,
                 mode.value, elapsed)
    return report


def _write_int(value) -> None:
    if isinstance(value, bool) or not isinstance(value, int):
        raise PassDefinitionError(f"rewrite produced {value!r}, expected an integer")
    if not INT64_MIN <= value <= INT64_MAX:
        raise IntegerOutOfRange(f"rewrite produced {value}, outside the signed 64-bit range")


def run_map(
    schema: AdtSchema,
    passdef: PassDef,
    root: SerializedRoot,
    out_store: RegionStore,
    mode: CursorMode = CursorMode.MUTABLE,
    cap: int | None = None,
) -> TraversalReport:
    """Stream ``root`` into fresh regions of ``out_store``, rewriting scalars per constructor"""
    if passdef.kind is not PassKind.MAP:
        raise PassDefinitionError(f"{passdef.name} is a {passdef.kind.value}, not a map")
    if passdef.datatype != root.datatype:
        raise PassDefinitionError(f"{passdef.name} maps {passdef.datatype}, the root holds {root.datatype}")
    passdef.validate(schema)
    plan = compile_plan(schema, root.datatype)
    everything = set(range(plan.buffer_count))
    engine = _Engine(root.store, plan.buffer_count, root.bundle.cursors, everything, mode,
                     config.depth_cap() if cap is None else cap)
    regions = [out_store.new_region() for _ in range(plan.buffer_count)]
    out = [out_store.frontier(r) for r in regions]
    start = CursorBundle.make(*out)
    immutable = mode is CursorMode.IMMUTABLE
    started = perf_counter_ns()
    stack: list[tuple] = [("node", plan)]
    while stack:
        engine.check_depth(stack)
        item = stack.pop()
        if item[0] == "restore":
            engine.restore(item[1])
            continue
        if item[0] == "ret":
            engine.copy_bundle()
            out = list(out)
            continue
        p = item[1]
        cp, _ = engine.enter(p)
        if cp is None:
            stack.append(("restore", engine.follow(p, everything)))
            stack.append(("node", p))
            continue
        scalars = engine.scalars(cp, None)
        clause = passdef.clauses.get(cp.name)
        if clause is not None and clause.rewrite is not None:
            rewritten = tuple(clause.rewrite(scalars))
            if len(rewritten) != len(scalars):
                raise PassDefinitionError(f"{passdef.name}: rewrite of {cp.name} changed the number of scalars")
        else:
            rewritten = scalars
        out[p.base] = out_store.append(out[p.base], bytes([cp.tag]))
        engine.written[p.base] += 1
        engine.steps += 1
        for j, value in zip(cp.scalars, rewritten):
            _write_int(value)
            b = cp.fields[j].buffer
            out[b] = out_store.append_int(out[b], value)
            engine.written[b] += 8
            engine.steps += 1
        if immutable:
            stack.append(("ret",))
        stack.extend(("node", cp.fields[j].child) for j in reversed(cp.packed))
    elapsed = perf_counter_ns() - started
    result = SerializedRoot(schema, root.datatype, plan.shape, start, regions, out_store)
    report = TraversalReport(
        pass_name=passdef.name,
        datatype=root.datatype,
        layout=root.layout.name.lower(),
        mode=mode,
        roles=plan.shape.roles(),
        result=result,
        bytes_read=engine.read,
        bytes_skipped=engine.skipped,
        bytes_written=engine.written,
        steps=engine.steps,
        bundle_copies=engine.copies,
        max_stack=engine.max_stack,
        wall_ns=elapsed,
        dead_field_fraction=passdef.dead_field_fraction(schema),
        end=engine.end_bundle(plan, only_live=False),
    )
    logger.debug("%s over %s (%s, %s) wrote %d bytes in %d ns", passdef.name, root.datatype, report.layout,
                 mode.value, sum(engine.written), elapsed)
    return report


def skip_value(schema: AdtSchema, datatype: str, bundle: CursorBundle, store: RegionStore) -> CursorBundle:
    """End witness of the value at ``bundle``: the position just past it in every buffer"""
    plan = compile_plan(schema, datatype)
    engine = _Engine(store, plan.buffer_count, bundle.cursors, set(range(plan.buffer_count)),
                     CursorMode.MUTABLE, config.depth_cap())
    engine.skip(plan)
    return engine.end_bundle(plan, only_live=False)


def reference_fold(schema: AdtSchema, passdef: PassDef, value: Value):
    """The same fold evaluated over the in-memory value"""
    structural = passdef.style is FoldStyle.STRUCTURAL
    results: list = []
    acc = passdef.init
    stack: list[tuple] = [("node", value)]
    while stack:
        item = stack.pop()
        if item[0] == "combine":
            _, clause, scalars, count = item
            kids = tuple(results[len(results) - count:])
            del results[len(results) - count:]
            results.append(clause.combine(scalars, kids))
            continue
        v = item[1]
        clause = passdef.clause(v.constructor)
        scalars = tuple(a for a, used in zip(v.args, clause.mask) if used and not isinstance(a, Value))
        kids = [a for a, used in zip(v.args, clause.mask) if used and isinstance(a, Value)]
        if structural:
            if clause.prune is not None:
                outcome = clause.prune(scalars)
                if outcome is not None:
                    results.append(outcome)
                    continue
            if not kids:
                results.append(clause.combine(scalars, ()))
                continue
            stack.append(("combine", clause, scalars, len(kids)))
        else:
            if clause.prune is not None and clause.prune(scalars, acc):
                continue
            if clause.step is not None:
                acc = clause.step(scalars, acc)
        stack.extend(("node", k) for k in reversed(kids))
    return results[0] if structural else acc


def reference_map(passdef: PassDef, value: Value) -> Value:
    """The same map applied to the in-memory value"""
    built: list[Value] = []
    stack: list[tuple] = [(False, value)]
    while stack:
        done, v = stack.pop()
        if not done:
            stack.append((True, v))
            stack.extend((False, a) for a in reversed(v.args) if isinstance(a, Value))
            continue
        n = sum(1 for a in v.args if isinstance(a, Value))
        kids = iter(built[len(built) - n:])
        del built[len(built) - n:]
        scalars = tuple(a for a in v.args if not isinstance(a, Value))
        clause = passdef.clauses.get(v.constructor)
        if clause is not None and clause.rewrite is not None:
            scalars = tuple(clause.rewrite(scalars))
        fresh = iter(scalars)
        built.append(Value(v.constructor, tuple(next(kids) if isinstance(a, Value) else next(fresh) for a in v.args)))
    return built[0]
