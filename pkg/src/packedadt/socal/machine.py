import logging
from dataclasses import dataclass, field
from time import perf_counter

from packedadt.errors import IllFormedStore, InvalidArgument, Stuck
from packedadt.layout.values import Value
from packedadt.schema.adt import Layout, ScalarInt
from packedadt.socal import envs as E
from packedadt.socal.checker import TraceEntry
from packedadt.socal.envs import Factored, Single, StaticEnvs, Violation
from packedadt.socal.printer import head
from packedadt.socal.store import CFact, CLoc, Concrete, RuntimeState, end_witness, read_value
from packedadt.socal.syntax import (
    AfterLoc,
    App,
    Case,
    DataCon,
    Expr,
    If,
    IntLit,
    IntroLocVec,
    Let,
    LetLoc,
    LetRegion,
    PlusOne,
    Prim,
    ProjField,
    ProjTag,
    SocalProgram,
    StartLoc,
    Var,
    apply_prim,
)
from packedadt.socal.wellformed import PASS, WellFormedMonitor

logger = logging.getLogger(__name__)


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class LocVal:
    """A packed value: its datatype and the location it was written at"""
    datatype: str
    loc: str


RValue = int | LocVal


@dataclass(frozen=True, slots=True)
class _Env:
    vars: dict = field(default_factory=dict)
    locs: dict = field(default_factory=dict)
    regions: dict = field(default_factory=dict)

    def bind_var(self, name: str, v: RValue) -> "_Env":
        return _Env({**self.vars, name: v}, self.locs, self.regions)

    def bind_loc(self, name: str, loc: str) -> "_Env":
        return _Env(self.vars, {**self.locs, name: loc}, self.regions)

    def bind_region(self, name: str, region: str) -> "_Env":
        return _Env(self.vars, self.locs, {**self.regions, name: region})


@dataclass(slots=True)
class RunResult:
    value: RValue
    state: RuntimeState
    envs: StaticEnvs
    trace: list[TraceEntry]
    steps: int

    def decoded(self) -> Value | int:
        """The result with packed values read back from the store"""
        if isinstance(self.value, LocVal):
            return read_value(self.state, self.value.datatype, self.state.locmap[self.value.loc])
        return self.value


class _Machine:
    __slots__ = ["program", "schema", "state", "ghost", "trace", "keep_trace", "monitor", "counter", "steps", "rule"]

    def __init__(self, program: SocalProgram, keep_trace: bool, check: bool):
        self.program = program
        self.schema = program.schema
        self.state = RuntimeState(program.schema)
        self.ghost = StaticEnvs()
        self.trace: list[TraceEntry] = []
        self.keep_trace = keep_trace
        self.monitor = WellFormedMonitor() if check else None
        self.counter = 0
        self.steps = 0
        self.rule = "start"

    def fresh(self, name: str) -> str:
        self.counter += 1
        return f"{name}#{self.counter}"

    def stuck(self, rule: str, detail: str) -> Stuck:
        return Stuck(rule, detail, self.state)

    def fired(self, rule: str, e: Expr | str, before: set[str]) -> None:
        self.rule = rule
        if self.keep_trace:
            delta = {loc: str(c) for loc, c in self.ghost.constraints.items() if loc not in before}
            text = e if isinstance(e, str) else head(e)
            self.trace.append(TraceEntry(rule, text, self.ghost.focus_json(), self.ghost.nursery_json(), delta))

    def ghost_step(self, rule: str, action):
        try:
            return action()
        except Violation as v:
            raise self.stuck(rule, v.premise) from None

    def after_step(self) -> None:
        self.steps += 1
        if self.monitor is None:
            return
        report = self.monitor.check(self.ghost, self.state)
        if not report.ok:
            raise IllFormedStore(f"after step {self.steps} ({self.rule}): {report}")

    def assign(self, loc: str, concrete: Concrete) -> None:
        """Map ``loc`` and every component of its shape"""
        pending = [(loc, concrete)]
        while pending:
            name, here = pending.pop()
            self.state.locmap[name] = here
            shape = self.ghost.shapes.get(name)
            if isinstance(shape, Factored):
                if not isinstance(here, CFact):
                    raise self.stuck(self.rule, f"{name} is factored but maps to {here}")
                pending.append((shape.tag, here.tag))
                for k, j, comp in shape.entries:
                    sub = here.entry(k, j)
                    if sub is None:
                        raise self.stuck(self.rule, f"{here} has no component ({k},{j})")
                    pending.append((comp, sub))

    def zero_root(self, loc: str) -> Concrete:
        shape = self.ghost.shapes[loc]
        if isinstance(shape, Single):
            return CLoc(shape.region, 0)
        return CFact(self.zero_root(shape.tag), tuple((k, j, self.zero_root(c)) for k, j, c in shape.entries))

    def concrete(self, loc: str, rule: str) -> Concrete:
        here = self.state.locmap.get(loc)
        if here is None:
            raise self.stuck(rule, f"location {loc} is not mapped")
        return here

    # rules

    def letloc(self, e: LetLoc, env: _Env) -> _Env:
        le = e.locexpr
        before = set(self.ghost.constraints)
        g, schema = self.ghost, self.schema
        if isinstance(le, StartLoc):
            rule = "D-LetLoc-Start"
            loc = self.fresh(e.loc)
            for region in _start_regions(le):
                if region not in env.regions:
                    raise self.stuck(rule, f"region {region} is not live")
            self.ghost_step(rule, lambda: E.bind_start(g, schema, loc, le, lambda r: env.regions[r], False))
            self.assign(loc, self.zero_root(loc))
        elif isinstance(le, PlusOne):
            rule = "D-LetLoc-Tag"
            base = env.locs[le.loc]
            here = self.concrete(base, rule)
            if not isinstance(here, CLoc):
                raise self.stuck(rule, f"{base} is not a single location")
            loc = self.fresh(e.loc)
            self.ghost_step(rule, lambda: E.bind_bump(g, loc, base, False))
            self.assign(loc, here.bumped())
        elif isinstance(le, AfterLoc):
            rule = "D-LetLoc-After"
            base = env.locs[le.loc]
            try:
                end = end_witness(self.state, le.datatype, self.concrete(base, rule))
            except IllFormedStore as exc:
                raise self.stuck(rule, f"no {le.datatype} value is written at {base}: {exc}") from None
            loc = self.fresh(e.loc)
            self.ghost_step(rule, lambda: E.bind_after(g, schema, loc, le.datatype, base, False))
            self.assign(loc, end)
        elif isinstance(le, ProjTag):
            rule = "D-LetLoc-ProjTag"
            base = env.locs[le.loc]
            if not isinstance(self.concrete(base, rule), CFact):
                raise self.stuck(rule, f"{base} is not a factored location")
            loc = self.ghost_step(rule, lambda: E.bind_proj_tag(g, base, False))
        elif isinstance(le, ProjField):
            rule = "D-LetLoc-ProjField"
            base = env.locs[le.loc]
            if not isinstance(self.concrete(base, rule), CFact):
                raise self.stuck(rule, f"{base} is not a factored location")
            loc = self.ghost_step(rule, lambda: E.bind_proj_field(g, schema, base, le.ctor, le.index, False))
        elif isinstance(le, IntroLocVec):
            rule = "D-LetLoc-IntroVec"
            tag = env.locs[le.tag]
            entries = [(k, j, env.locs[l]) for k, j, l in le.entries]
            for comp in [tag, *(c for _, _, c in entries)]:
                self.concrete(comp, rule)
            loc = self.fresh(e.loc)
            self.ghost_step(rule, lambda: E.bind_intro(g, schema, loc, tag, entries, le.datatype, False))
            shape = g.shapes[loc]
            m = self.state.locmap
            self.state.locmap[loc] = CFact(m[shape.tag], tuple((k, j, m[c]) for k, j, c in shape.entries))
        else:
            raise TypeError(f"not a location expression: {le!r}")
        self.fired(rule, e, before)
        return env.bind_loc(e.loc, loc)

    def atom(self, a: Expr, env: _Env) -> RValue:
        if isinstance(a, IntLit):
            return a.value
        return env.vars[a.name]

    def datacon(self, e: DataCon, env: _Env) -> LocVal:
        owner = self.schema.owner(e.ctor)
        factored = owner.layout is Layout.FACTORED
        rule = "D-DataConstructor-FullyFactored" if factored else "D-DataConstructor"
        ctor = owner.constructor(e.ctor)
        dest = env.locs[e.loc]
        here = self.concrete(dest, rule)
        args = [self.atom(a, env) for a in e.args]
        if len(args) != ctor.arity:
            raise self.stuck(rule, f"{ctor.name} takes {ctor.arity} arguments")
        cells: list[tuple[CLoc, object]] = []
        if factored:
            if not isinstance(here, CFact) or not isinstance(here.tag, CLoc):
                raise self.stuck(rule, f"{dest} is not a factored location")
            cells.append((here.tag, ctor.name))
            for j, (f, v) in enumerate(zip(ctor.fields, args)):
                if isinstance(f, ScalarInt):
                    comp = here.entry(ctor.name, j)
                    if not isinstance(comp, CLoc):
                        raise self.stuck(rule, f"{dest} has no single component ({ctor.name},{j})")
                    cells.append((comp, v))
        else:
            if not isinstance(here, CLoc):
                raise self.stuck(rule, f"{dest} is not a single location")
            cells.append((here, ctor.name))
            at = here
            for f, v in zip(ctor.fields, args):
                if isinstance(f, ScalarInt):
                    at = at.bumped()
                    cells.append((at, v))
        for f, v in zip(ctor.fields, args):
            if isinstance(f, ScalarInt) != isinstance(v, int):
                raise self.stuck(rule, f"argument {v!r} does not fit field {f} of {ctor.name}")
        for at, cell in cells:
            if self.state.written(at):
                raise self.stuck(rule, f"cell {at} is already written")
        before = set(self.ghost.constraints)
        refs = [(v.datatype, v.loc) if isinstance(v, LocVal) else None for v in args]
        self.ghost_step(rule, lambda: E.write_ctor(self.ghost, self.schema, dest, ctor.name, refs, False))
        for at, cell in cells:
            self.state.write_cell(at, cell)
        self.fired(rule, e, before)
        return LocVal(owner.name, dest)

    def case(self, e: Case, env: _Env) -> tuple[Expr, _Env]:
        rule = "D-Case"
        v = env.vars[e.scrutinee]
        if not isinstance(v, LocVal):
            raise self.stuck(rule, f"{e.scrutinee} is not a packed value")
        here = self.concrete(v.loc, rule)
        tag_at = here if isinstance(here, CLoc) else here.tag
        cell = self.state.cell(tag_at) if isinstance(tag_at, CLoc) else None
        if cell is None:
            raise self.stuck(rule, f"location {v.loc} ({tag_at}) is unwritten")
        dt = self.schema.datatype(v.datatype)
        if not isinstance(cell, str) or cell not in (c.name for c in dt.constructors):
            raise self.stuck(rule, f"{tag_at} holds {cell!r}, not a {dt.name} constructor")
        branch = next((b for b in e.branches if b.ctor == cell), None)
        if branch is None:
            raise self.stuck(rule, f"no branch for {cell}")
        ctor = dt.constructor(cell)
        before = set(self.ghost.constraints)
        names = [self.fresh(b.loc or f"{b.var}@") for b in branch.binders]
        locs = E.bind_pattern(self.ghost, self.schema, v.loc, cell, names)
        values = self.bind_fields(rule, dt, ctor, here, locs)
        inner = env
        for b, loc, val in zip(branch.binders, locs, values):
            inner = inner.bind_var(b.var, val)
            if b.loc:
                inner = inner.bind_loc(b.loc, loc)
        self.fired(rule, e, before)
        return branch.body, inner

    def bind_fields(self, rule, dt, ctor, here: Concrete, locs: list[str]) -> list[RValue]:
        values: list[RValue] = []
        try:
            if isinstance(here, CLoc):
                at = here.bumped()
                by_index: dict[int, RValue] = {}
                order = sorted(range(len(ctor.fields)), key=lambda j: not isinstance(ctor.fields[j], ScalarInt))
                for j in order:
                    f, loc = ctor.fields[j], locs[j]
                    self.assign(loc, at)
                    if isinstance(f, ScalarInt):
                        by_index[j] = _int_cell(self.state, at)
                        at = at.bumped()
                    else:
                        by_index[j] = LocVal(f.datatype, loc)
                        at = end_witness(self.state, f.datatype, at)
                return [by_index[j] for j in range(len(ctor.fields))]
            previous = None
            for j, (f, loc) in enumerate(zip(ctor.fields, locs)):
                if not dt.is_self(f):
                    comp = self.concrete(loc, rule)
                    values.append(_int_cell(self.state, comp) if isinstance(f, ScalarInt) else LocVal(f.datatype, loc))
                    continue
                if previous is None:
                    entries = []
                    for k, i, c in here.entries:
                        if k == ctor.name:
                            kf = ctor.fields[i]
                            c = c.bumped() if isinstance(kf, ScalarInt) else end_witness(self.state, kf.datatype, c)
                        entries.append((k, i, c))
                    root = CFact(here.tag.bumped(), tuple(entries))
                else:
                    root = end_witness(self.state, dt.name, self.state.locmap[previous])
                self.assign(loc, root)
                values.append(LocVal(dt.name, loc))
                previous = loc
        except IllFormedStore as exc:
            raise self.stuck(rule, str(exc)) from None
        return values

    def run(self, e: Expr) -> RValue:
        """CEK loop: a control (expression or value), an environment and a stack of frames"""
        stack: list[tuple] = []
        control: tuple = ("eval", e, _Env())
        while True:
            if control[0] == "eval":
                _, e, env = control
                control = self.eval(e, env, stack)
            else:
                value = control[1]
                if not stack:
                    return value
                control = self.resume(stack.pop(), value, stack)
            self.after_step()

    def eval(self, e: Expr, env: _Env, stack: list) -> tuple:
        if isinstance(e, IntLit):
            return ("value", e.value)
        if isinstance(e, Var):
            return ("value", env.vars[e.name])
        if isinstance(e, Let):
            stack.append(("let", e, env))
            return ("eval", e.rhs, env)
        if isinstance(e, LetRegion):
            region = self.fresh(e.region)
            before = set(self.ghost.constraints)
            self.state.new_region(region)
            E.intro_region(self.ghost, region)
            self.fired("D-LetRegion", e, before)
            return ("eval", e.body, env.bind_region(e.region, region))
        if isinstance(e, LetLoc):
            return ("eval", e.body, self.letloc(e, env))
        if isinstance(e, DataCon):
            return ("value", self.datacon(e, env))
        if isinstance(e, Case):
            body, inner = self.case(e, env)
            return ("eval", body, inner)
        if isinstance(e, If):
            stack.append(("if", e, env))
            return ("eval", e.cond, env)
        if isinstance(e, Prim):
            stack.append(("prim-left", e, env))
            return ("eval", e.left, env)
        if isinstance(e, App):
            fn = self.program.function(e.fn)
            if fn is None or len(e.args) != len(fn.params) or len(e.locs) != len(fn.loc_params):
                raise self.stuck("D-App", f"bad call to {e.fn}")
            if not e.args:
                return self.enter(e, env, [])
            stack.append(("args", e, env, []))
            return ("eval", e.args[0], env)
        raise TypeError(f"not an expression: {e!r}")

    def resume(self, frame: tuple, value: RValue, stack: list) -> tuple:
        kind, e, env = frame[0], frame[1], frame[2]
        if kind == "let":
            self.fired("D-Let", e, set(self.ghost.constraints))
            return ("eval", e.body, env.bind_var(e.var, value))
        if kind == "if":
            if not isinstance(value, int):
                raise self.stuck("D-If", "the condition is not an integer")
            self.fired("D-If", e, set(self.ghost.constraints))
            return ("eval", e.then if value != 0 else e.orelse, env)
        if kind == "prim-left":
            stack.append(("prim-right", e, env, value))
            return ("eval", e.right, env)
        if kind == "prim-right":
            left = frame[3]
            if not isinstance(left, int) or not isinstance(value, int):
                raise self.stuck("D-Prim", f"{e.op} needs integers")
            self.fired("D-Prim", e, set(self.ghost.constraints))
            return ("value", apply_prim(e.op, left, value))
        if kind == "args":
            collected = frame[3] + [value]
            if len(collected) < len(e.args):
                stack.append(("args", e, env, collected))
                return ("eval", e.args[len(collected)], env)
            return self.enter(e, env, collected)
        raise ValueError(f"unknown frame {kind}")

    def enter(self, e: App, env: _Env, values: list[RValue]) -> tuple:
        fn = self.program.function(e.fn)
        callee = _Env(
            {var: v for (var, _), v in zip(fn.params, values)},
            {p: env.locs[l] for p, l in zip(fn.loc_params, e.locs)},
            {},
        )
        self.fired("D-App", e, set(self.ghost.constraints))
        return ("eval", fn.body, callee)


def _int_cell(state: RuntimeState, at: Concrete) -> int:
    cell = state.cell(at) if isinstance(at, CLoc) else None
    if not isinstance(cell, int):
        raise IllFormedStore(f"expected an integer at {at}, found {cell!r}")
    return cell


def _start_regions(start: StartLoc) -> list[str]:
    out, pending = [], [start]
    while pending:
        node = pending.pop()
        out.append(node.region)
        pending.extend(entry.target for entry in node.entries or ())
    return out


def interpret(
    program: SocalProgram, *, trace: bool = False, check: bool = True, max_steps: int | None = None
) -> RunResult:
    """
    Run the main expression on the store semantics.

    Parameters
    ----------
    program : SocalProgram
        A parsed program with a ``main``. It is not typechecked here.
    trace : bool
        Keep one trace entry per rule fired, with the ghost A, N and C delta.
    check : bool
        Check store well-formedness against the ghost environments after every step.
    max_steps : int, optional
        Give up with ``Stuck`` after this many machine steps.

    Returns
    -------
    RunResult
        Final value, store, location map, ghost environments and trace.

    Raises
    ------
    Stuck
        No rule applies, e.g. a case on an unwritten location.
    IllFormedStore
        ``check`` is on and a step broke well-formedness.
    """
    if program.main is None:
        raise InvalidArgument("the program has no main expression")
    machine = _Machine(program, trace, check)
    if max_steps is not None:
        machine.monitor = _Limited(machine.monitor, max_steps)
    started = perf_counter()
    value = machine.run(program.main)
    logger.debug("interpreted %d steps in %.4f s", machine.steps, perf_counter() - started)
    return RunResult(value, machine.state, machine.ghost, machine.trace, machine.steps)


class _Limited:
    """Wraps the monitor to stop runaway programs"""
    __slots__ = ["inner", "limit", "count"]

    def __init__(self, inner: WellFormedMonitor | None, limit: int):
        self.inner = inner
        self.limit = limit
        self.count = 0

    def check(self, envs: StaticEnvs, state: RuntimeState):
        self.count += 1
        if self.count > self.limit:
            raise Stuck("D-Step", f"no value after {self.limit} steps", state)
        if self.inner is None:
            return PASS
        return self.inner.check(envs, state)
