import logging
from dataclasses import dataclass, field

from packedadt.errors import TypecheckFailed
from packedadt.schema.adt import Layout, ScalarInt
from packedadt.socal import envs as E
from packedadt.socal.envs import Reason, StaticEnvs, Violation
from packedadt.socal.printer import head
from packedadt.socal.syntax import (
    INT_T,
    AfterLoc,
    App,
    Case,
    DataCon,
    Expr,
    FunDef,
    If,
    IntLit,
    IntroLocVec,
    IntType,
    Let,
    LetLoc,
    LetRegion,
    LocType,
    PlusOne,
    Prim,
    ProjField,
    ProjTag,
    SocalProgram,
    StartLoc,
    Type,
    Var,
)

logger = logging.getLogger(__name__)


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class Rejection:
    """Why a program was rejected: the rule, the premise that failed and where"""
    reason: Reason
    rule: str
    premise: str
    location: tuple[int, int] | None = None
    function: str | None = None

    def __str__(self) -> str:
        where = f"{self.location[0]}:{self.location[1]}: " if self.location else ""
        inside = f" (in {self.function})" if self.function else ""
        return f"{where}{self.reason.value}: {self.rule}: {self.premise}{inside}"

    def to_json(self) -> dict:
        return {
            "reason": self.reason.value,
            "rule": self.rule,
            "premise": self.premise,
            "location": list(self.location) if self.location else None,
            "function": self.function,
        }


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class TraceEntry:
    rule: str
    expr: str
    focus: dict
    nursery: list
    delta: dict

    def to_json(self) -> dict:
        return {"rule": self.rule, "e": self.expr, "A": self.focus, "N": self.nursery, "C_delta": self.delta}


@dataclass(slots=True)
class TypecheckResult:
    accepted: bool
    trace: list[TraceEntry] = field(default_factory=list)
    rejection: Rejection | None = None
    constraints: dict = field(default_factory=dict)

    def require(self) -> "TypecheckResult":
        if not self.accepted:
            raise TypecheckFailed(self.rejection)
        return self


@dataclass(frozen=True, slots=True)
class _Scope:
    vars: dict = field(default_factory=dict)
    locs: dict = field(default_factory=dict)
    regions: dict = field(default_factory=dict)

    def bind_var(self, name: str, t: Type) -> "_Scope":
        return _Scope({**self.vars, name: t}, self.locs, self.regions)

    def bind_loc(self, name: str, loc: str) -> "_Scope":
        return _Scope(self.vars, {**self.locs, name: loc}, self.regions)

    def bind_region(self, name: str, region: str) -> "_Scope":
        return _Scope(self.vars, self.locs, {**self.regions, name: region})


class _Reject(Exception):
    def __init__(self, violation: Violation, expr: Expr | None):
        self.violation = violation
        self.expr = expr


def _fail(reason: Reason, rule: str, premise: str, expr: Expr) -> _Reject:
    return _Reject(Violation(reason, rule, premise), expr)


class _Checker:
    __slots__ = ["program", "schema", "trace", "used", "constraints", "function"]

    def __init__(self, program: SocalProgram):
        self.program = program
        self.schema = program.schema
        self.trace: list[TraceEntry] = []
        self.used: set[str] = set()
        self.constraints: dict = {}
        self.function: str | None = None

    def fresh(self, name: str) -> str:
        """A location or region id unique across the whole check"""
        if name not in self.used:
            self.used.add(name)
            return name
        n = 1
        while f"{name}'{n}" in self.used:
            n += 1
        self.used.add(f"{name}'{n}")
        return f"{name}'{n}"

    def record(self, rule: str, e: Expr | str, envs: StaticEnvs, before: set[str]) -> None:
        delta = {loc: str(c) for loc, c in envs.constraints.items() if loc not in before}
        text = e if isinstance(e, str) else head(e)
        self.trace.append(TraceEntry(rule, text, envs.focus_json(), envs.nursery_json(), delta))

    def run(self, rule: str, e: Expr, envs: StaticEnvs, action):
        before = set(envs.constraints)
        try:
            out = action()
        except Violation as v:
            raise _Reject(v, e) from None
        self.record(rule, e, envs, before)
        return out

    # functions and program

    def check_function(self, fn: FunDef) -> None:
        self.function = fn.name
        envs = StaticEnvs()
        ids = {l: self.fresh(l) for l in fn.loc_params}
        scope = _Scope(locs=dict(ids))
        inputs: dict[str, str] = {}
        for var, t in fn.params:
            if isinstance(t, LocType):
                if inputs.get(t.loc, t.datatype) != t.datatype:
                    raise _fail(Reason.TYPE_MISMATCH, "T-Program", f"{t.loc} is typed twice", fn.body)
                inputs[t.loc] = t.datatype
                scope = scope.bind_var(var, LocType(t.datatype, ids[t.loc]))
            else:
                scope = scope.bind_var(var, INT_T)
        output = fn.result.loc if isinstance(fn.result, LocType) else None
        if output is not None and output in inputs:
            raise _fail(Reason.TYPE_MISMATCH, "T-Program", f"output location {output} is also an input", fn.body)
        for l in fn.loc_params:
            if l not in inputs and l != output:
                raise _fail(Reason.TYPE_MISMATCH, "T-Program", f"location parameter {l} is not used in the signature", fn.body)

        def region_for(comp: str) -> str:
            return f"r[{comp}]"

        for l, dt in inputs.items():
            E.shape_for(envs, self.schema, dt, ids[l], region_for)
            envs.sigma[ids[l]] = dt
        if output is not None:
            loc = ids[output]
            E.shape_for(envs, self.schema, fn.result.datatype, loc, region_for)
            envs.nursery.add(loc)
            for region in E.regions_of(envs, loc):
                envs.focus[region] = loc
        self.record("T-Fun", f"define {fn.name}", envs, set())
        t = self.expr(fn.body, scope, envs)
        expected = INT_T if output is None else LocType(fn.result.datatype, ids[output])
        if t != expected:
            raise _fail(Reason.TYPE_MISMATCH, "T-Program", f"{fn.name} returns {t}, declared {fn.result}", fn.body)
        self.finish(envs, fn.body, ids[output] if output else None)

    def finish(self, envs: StaticEnvs, body: Expr, output: str | None) -> None:
        if output is not None and output not in envs.sigma:
            raise _fail(Reason.OUTPUT_NOT_WRITTEN, "T-Program", f"output {output} is never written", body)
        if envs.nursery:
            left = ", ".join(sorted(envs.nursery))
            raise _fail(Reason.OUTPUT_NOT_WRITTEN, "T-Program", f"allocated but never written: {left}", body)
        self.constraints.update(envs.constraints)

    def check_main(self, main: Expr) -> None:
        self.function = None
        envs = StaticEnvs()
        self.expr(main, _Scope(), envs)
        self.finish(envs, main, None)

    # expressions

    def expr(self, e: Expr, scope: _Scope, envs: StaticEnvs) -> Type:
        if isinstance(e, IntLit):
            self.record("T-Int", e, envs, set(envs.constraints))
            return INT_T
        if isinstance(e, Var):
            self.record("T-Var", e, envs, set(envs.constraints))
            return scope.vars[e.name]
        if isinstance(e, Prim):
            for side in (e.left, e.right):
                if self.expr(side, scope, envs) != INT_T:
                    raise _fail(Reason.TYPE_MISMATCH, "T-Prim", f"operands of {e.op} are Int", e)
            self.record("T-Prim", e, envs, set(envs.constraints))
            return INT_T
        if isinstance(e, Let):
            t = self.expr(e.rhs, scope, envs)
            self.record("T-Let", e, envs, set(envs.constraints))
            return self.expr(e.body, scope.bind_var(e.var, t), envs)
        if isinstance(e, LetRegion):
            region = self.fresh(e.region)
            self.run("T-LetRegion", e, envs, lambda: E.intro_region(envs, region))
            return self.expr(e.body, scope.bind_region(e.region, region), envs)
        if isinstance(e, LetLoc):
            return self.letloc(e, scope, envs)
        if isinstance(e, DataCon):
            return self.datacon(e, scope, envs)
        if isinstance(e, If):
            return self.if_(e, scope, envs)
        if isinstance(e, Case):
            return self.case(e, scope, envs)
        if isinstance(e, App):
            return self.app(e, scope, envs)
        raise TypeError(f"not an expression: {e!r}")

    def letloc(self, e: LetLoc, scope: _Scope, envs: StaticEnvs) -> Type:
        le = e.locexpr
        schema = self.schema
        if isinstance(le, StartLoc):
            loc = self.fresh(e.loc)
            self.run("T-LetLoc-Start", e, envs, lambda: E.bind_start(
                envs, schema, loc, le, lambda r: scope.regions[r], True))
        elif isinstance(le, PlusOne):
            loc = self.fresh(e.loc)
            self.run("T-LetLoc-Tag", e, envs, lambda: E.bind_bump(envs, loc, scope.locs[le.loc], True))
        elif isinstance(le, AfterLoc):
            loc = self.fresh(e.loc)
            self.run("T-LetLoc-After", e, envs, lambda: E.bind_after(
                envs, schema, loc, le.datatype, scope.locs[le.loc], True))
        elif isinstance(le, ProjTag):
            loc = self.run("T-LetLoc-ProjTag", e, envs, lambda: E.bind_proj_tag(envs, scope.locs[le.loc], True))
        elif isinstance(le, ProjField):
            loc = self.run("T-LetLoc-ProjField", e, envs, lambda: E.bind_proj_field(
                envs, schema, scope.locs[le.loc], le.ctor, le.index, True))
        elif isinstance(le, IntroLocVec):
            loc = self.fresh(e.loc)
            entries = [(k, j, scope.locs[l]) for k, j, l in le.entries]
            self.run("T-LetLoc-IntroLocVec", e, envs, lambda: E.bind_intro(
                envs, schema, loc, scope.locs[le.tag], entries, le.datatype, True))
        else:
            raise TypeError(f"not a location expression: {le!r}")
        return self.expr(e.body, scope.bind_loc(e.loc, loc), envs)

    def arg_ref(self, a: Expr, scope: _Scope) -> E.ArgRef:
        if isinstance(a, Var):
            t = scope.vars[a.name]
            return (t.datatype, t.loc) if isinstance(t, LocType) else None
        return None

    def datacon(self, e: DataCon, scope: _Scope, envs: StaticEnvs) -> Type:
        loc = scope.locs[e.loc]
        args = [self.arg_ref(a, scope) for a in e.args]
        owner = self.schema.owner(e.ctor)
        rule = "T-DataConstructor-FullyFactored" if owner.layout is Layout.FACTORED else "T-DataConstructor"
        datatype = self.run(rule, e, envs, lambda: E.write_ctor(envs, self.schema, loc, e.ctor, args, True))
        return LocType(datatype, loc)

    def branches(self, rule: str, envs: StaticEnvs, arms) -> Type:
        """Check each arm on a copy of ``envs``; all must agree on type, A and N"""
        results = []
        for body, prepare in arms:
            branch_envs = envs.copy()
            branch_scope = prepare(branch_envs)
            results.append((self.expr(body, branch_scope, branch_envs), branch_envs, body))
        first_t, first_envs, _ = results[0]
        for t, other, body in results[1:]:
            if t != first_t:
                raise _fail(Reason.BRANCH_MISMATCH, rule, f"branches return {first_t} and {t}", body)
            if other.focus != first_envs.focus or other.nursery != first_envs.nursery:
                raise _fail(Reason.BRANCH_MISMATCH, rule, "branches leave different allocation states", body)
        envs.focus = dict(first_envs.focus)
        envs.nursery = set(first_envs.nursery)
        for _, other, _ in results:
            envs.sigma.update(other.sigma)
            envs.constraints.update(other.constraints)
            envs.shapes.update(other.shapes)
        return first_t

    def if_(self, e: If, scope: _Scope, envs: StaticEnvs) -> Type:
        if self.expr(e.cond, scope, envs) != INT_T:
            raise _fail(Reason.TYPE_MISMATCH, "T-If", "the condition is Int", e)
        self.record("T-If", e, envs, set(envs.constraints))
        return self.branches("T-If", envs, [(e.then, lambda _: scope), (e.orelse, lambda _: scope)])

    def case(self, e: Case, scope: _Scope, envs: StaticEnvs) -> Type:
        t = scope.vars[e.scrutinee]
        if not isinstance(t, LocType):
            raise _fail(Reason.TYPE_MISMATCH, "T-Case", f"{e.scrutinee} is not a packed value", e)
        if envs.sigma.get(t.loc) != t.datatype:
            raise _fail(Reason.UNWRITTEN_DEPENDENCY, "T-Case", f"{e.scrutinee} at {t.loc} is not written", e)
        dt = self.schema.datatype(t.datatype)
        names = [c.name for c in dt.constructors]
        seen = []
        for b in e.branches:
            if b.ctor not in names:
                raise _fail(Reason.TYPE_MISMATCH, "T-Pat", f"{b.ctor} is not a constructor of {dt.name}", b.body)
            if b.ctor in seen:
                raise _fail(Reason.TYPE_MISMATCH, "T-Pat", f"{b.ctor} matched twice", b.body)
            if len(b.binders) != dt.constructor(b.ctor).arity:
                raise _fail(Reason.ARITY_MISMATCH, "T-Pat", f"{b.ctor} binds {dt.constructor(b.ctor).arity} fields", b.body)
            seen.append(b.ctor)
        missing = [n for n in names if n not in seen]
        if missing:
            raise _fail(Reason.MISSING_BRANCH, "T-Case", f"no branch for {', '.join(missing)}", e)
        self.record("T-Case", e, envs, set(envs.constraints))

        def arm(b):
            def prepare(branch_envs: StaticEnvs) -> _Scope:
                before = set(branch_envs.constraints)
                fresh = [self.fresh(x.loc or f"{x.var}@") for x in b.binders]
                locs = E.bind_pattern(branch_envs, self.schema, t.loc, b.ctor, fresh)
                inner = scope
                for x, f, loc in zip(b.binders, dt.constructor(b.ctor).fields, locs):
                    inner = inner.bind_var(x.var, INT_T if isinstance(f, ScalarInt) else LocType(f.datatype, loc))
                    if x.loc:
                        inner = inner.bind_loc(x.loc, loc)
                self.record("T-Pat", f"{b.ctor} {' '.join(x.var for x in b.binders)}".strip(), branch_envs, before)
                return inner
            return b.body, prepare

        return self.branches("T-Case", envs, [arm(b) for b in e.branches])

    def app(self, e: App, scope: _Scope, envs: StaticEnvs) -> Type:
        fn = self.program.function(e.fn)
        if len(e.locs) != len(fn.loc_params) or len(e.args) != len(fn.params):
            raise _fail(
                Reason.ARITY_MISMATCH, "T-App",
                f"{fn.name} takes {len(fn.loc_params)} locations and {len(fn.params)} arguments", e,
            )
        mapping = {p: scope.locs[l] for p, l in zip(fn.loc_params, e.locs)}
        for (var, want), arg in zip(fn.params, e.args):
            if isinstance(want, IntType):
                if self.expr(arg, scope, envs) != INT_T:
                    raise _fail(Reason.TYPE_MISMATCH, "T-App", f"argument {var} of {fn.name} is Int", e)
                continue
            if not isinstance(arg, Var):
                raise _fail(Reason.TYPE_MISMATCH, "T-App", f"packed argument {var} must be a variable", e)
            got = scope.vars[arg.name]
            if got != LocType(want.datatype, mapping[want.loc]):
                raise _fail(Reason.TYPE_MISMATCH, "T-App", f"argument {var} of {fn.name} is {want}, got {got}", e)
            if envs.sigma.get(got.loc) != want.datatype:
                raise _fail(Reason.UNWRITTEN_DEPENDENCY, "T-App", f"argument {arg.name} at {got.loc} is not written", e)
        if isinstance(fn.result, IntType):
            self.record("T-App", e, envs, set(envs.constraints))
            return INT_T
        out = mapping[fn.result.loc]
        self.run("T-App", e, envs, lambda: E.finish_output(envs, self.schema, out, fn.result.datatype, True))
        return LocType(fn.result.datatype, out)


def typecheck(program: SocalProgram) -> TypecheckResult:
    """
    Check every function and the main expression.

    Returns
    -------
    TypecheckResult
        ``accepted`` with one trace entry per rule application (the focus A,
        the nursery N and the constraints the step added), or the
        :class:`Rejection` naming the rule and premise that failed.
    """
    checker = _Checker(program)
    try:
        for fn in program.functions:
            checker.check_function(fn)
        if program.main is not None:
            checker.check_main(program.main)
    except _Reject as r:
        pos = getattr(r.expr, "pos", None) if r.expr is not None else None
        v = r.violation
        rejection = Rejection(v.reason, v.rule, v.premise, pos, checker.function)
        logger.info("rejected: %s", rejection)
        return TypecheckResult(False, checker.trace, rejection, checker.constraints)
    logger.debug("accepted with %d trace entries", len(checker.trace))
    return TypecheckResult(True, checker.trace, None, checker.constraints)
