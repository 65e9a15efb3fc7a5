import logging
from dataclasses import dataclass, field
from time import perf_counter

import numpy as np

from packedadt.errors import FuzzFailure, IllFormedStore, InvalidArgument, Stuck
from packedadt.layout.plan import ShapePlan, compile_plan
from packedadt.layout.values import Value, random_value
from packedadt.layout.writer import serialize
from packedadt.regions.runtime import RegionStore
from packedadt.schema.adt import AdtSchema, Layout, ScalarInt, parse_schema
from packedadt.socal.checker import typecheck
from packedadt.socal.envs import Reason, datatype_keys
from packedadt.socal.erasure import evaluate_erased
from packedadt.socal.machine import LocVal, RunResult, interpret
from packedadt.socal.parser import parse_socal
from packedadt.socal.printer import show_program
from packedadt.socal.store import CLoc, Concrete, region_bytes
from packedadt.socal.syntax import (
    AfterLoc,
    DataCon,
    Expr,
    IntLit,
    IntroLocVec,
    Let,
    LetLoc,
    LetRegion,
    PlusOne,
    ProjField,
    ProjTag,
    SocalProgram,
    StartEntry,
    StartLoc,
    Var,
)

logger = logging.getLogger(__name__)

TREE = "data Tree = Leaf Int | Node Tree Tree"
LIST = "data List = Nil | Cons Int List"

FUZZ_SCHEMAS = {
    ("Tree", Layout.FLAT): parse_schema(TREE),
    ("Tree", Layout.FACTORED): parse_schema(f"{TREE}; layout Tree = Factored"),
    ("List", Layout.FLAT): parse_schema(LIST),
    ("List", Layout.FACTORED): parse_schema(f"{LIST}; layout List = Factored"),
}

MAX_STEPS = 200_000


class _Emitter:
    """Builds a main expression that writes one value, constructor by constructor, as the typing rules demand"""
    __slots__ = ["schema", "counter", "fault", "regions"]

    def __init__(self, schema: AdtSchema, fault: str | None):
        self.schema = schema
        self.counter = 0
        self.fault = fault
        self.regions: list[str] = []

    def fresh(self, prefix: str) -> str:
        self.counter += 1
        return f"{prefix}{self.counter}"

    def start(self, datatype: str) -> StartLoc:
        region = self.fresh("r")
        self.regions.append(region)
        dt = self.schema.datatype(datatype)
        if dt.layout is Layout.FLAT:
            return StartLoc(region)
        entries = []
        for k, j, f in datatype_keys(self.schema, datatype):
            if isinstance(f, ScalarInt):
                sub = self.region_start()
            else:
                sub = self.start(f.datatype)
            entries.append(StartEntry(k, j, sub))
        return StartLoc(region, tuple(entries), datatype)

    def region_start(self) -> StartLoc:
        region = self.fresh("r")
        self.regions.append(region)
        return StartLoc(region)

    def emit(self, datatype: str, loc: str, value: Value) -> Expr:
        if self.schema.datatype(datatype).layout is Layout.FLAT:
            return self.flat(loc, value)
        return self.factored(datatype, loc, value)

    def take_fault(self, packed: list[int]) -> bool:
        if self.fault == "after" and len(packed) >= 2:
            self.fault = None
            return True
        return False

    def flat(self, loc: str, value: Value) -> Expr:
        ctor = self.schema.constructor(value.constructor)
        scalars = [j for j, f in enumerate(ctor.fields) if isinstance(f, ScalarInt)]
        packed = [j for j, f in enumerate(ctor.fields) if not isinstance(f, ScalarInt)]
        binds: list[tuple] = []
        args: list[Expr | None] = [None] * ctor.arity
        for j in scalars:
            args[j] = IntLit(value.args[j])
        if packed:
            at = loc
            for _ in range(1 + len(scalars)):
                nxt = self.fresh("l")
                binds.append(("loc", nxt, PlusOne(at)))
                at = nxt
            binds.extend(self.chain(packed, at, [ctor.fields[j].datatype for j in packed], value, args))
        return _nest(binds, DataCon(ctor.name, loc, tuple(args)))

    def chain(self, indices: list[int], first: str, datatypes: list[str], value: Value, args: list) -> list[tuple]:
        """Packed arguments written one after the other from ``first``"""
        early = self.take_fault(indices)
        binds: list[tuple] = []
        at, previous = first, None
        for j, dt in zip(indices, datatypes):
            if previous is not None:
                at = self.fresh("l")
                binds.append(("loc", at, AfterLoc(*previous)))
            x = self.fresh("x")
            binds.append(("let", x, self.emit(dt, at, value.args[j])))
            args[j] = Var(x)
            previous = (dt, at)
        if early:
            # the second argument's location is bound before the first argument is written
            after = next(i for i, b in enumerate(binds) if b[0] == "loc")
            binds.insert(0, binds.pop(after))
        return binds

    def factored(self, datatype: str, loc: str, value: Value) -> Expr:
        dt = self.schema.datatype(datatype)
        ctor = dt.constructor(value.constructor)
        own = [j for j, f in enumerate(ctor.fields) if not dt.is_self(f)]
        selves = [j for j, f in enumerate(ctor.fields) if dt.is_self(f)]
        keys = datatype_keys(self.schema, datatype) if selves else [(ctor.name, j, ctor.fields[j]) for j in own]
        binds: list[tuple] = []
        tag = self.fresh("ld")
        binds.append(("loc", tag, ProjTag(loc)))
        comps: dict[tuple[str, int], str] = {}
        for k, j, _ in keys:
            comps[(k, j)] = self.fresh("lc")
            binds.append(("loc", comps[(k, j)], ProjField(k, j, loc)))
        args: list[Expr | None] = [None] * ctor.arity
        for j in own:
            f = ctor.fields[j]
            if isinstance(f, ScalarInt):
                args[j] = IntLit(value.args[j])
            else:
                x = self.fresh("x")
                binds.append(("let", x, self.emit(f.datatype, comps[(ctor.name, j)], value.args[j])))
                args[j] = Var(x)
        if selves:
            next_tag = self.fresh("ld")
            binds.append(("loc", next_tag, PlusOne(tag)))
            entries = []
            for k, j, f in keys:
                if k != ctor.name:
                    entries.append((k, j, comps[(k, j)]))
                    continue
                moved = self.fresh("lc")
                step = PlusOne(comps[(k, j)]) if isinstance(f, ScalarInt) else AfterLoc(f.datatype, comps[(k, j)])
                binds.append(("loc", moved, step))
                entries.append((k, j, moved))
            first = self.fresh("l")
            binds.append(("loc", first, IntroLocVec(next_tag, tuple(entries), datatype)))
            binds.extend(self.chain(selves, first, [datatype] * len(selves), value, args))
        return _nest(binds, DataCon(ctor.name, loc, tuple(args)))


def _nest(binds: list[tuple], body: Expr) -> Expr:
    for kind, name, rhs in reversed(binds):
        body = LetLoc(name, rhs, body) if kind == "loc" else Let(name, rhs, body)
    return body


def program_for_value(schema: AdtSchema, datatype: str, value: Value, fault: str | None = None) -> SocalProgram:
    """
    A constructor-only program whose main writes ``value`` into fresh regions.

    :param fault: ``"after"`` binds the location of a second packed argument
        before the first one is written, which the checker must reject
    """
    emitter = _Emitter(schema, fault)
    start = emitter.start(datatype)
    root = emitter.fresh("l")
    body: Expr = LetLoc(root, start, emitter.emit(datatype, root, value))
    for region in reversed(emitter.regions):
        body = LetRegion(region, body)
    return SocalProgram(schema, (), body)


# function templates, one set per (datatype, layout)

_FUNCTIONS = {
    ("Tree", Layout.FLAT): """
(define (build lout) ((n Int) (s Int)) (Tree lout)
  (if (<= n 0) (Leaf lout s)
    (letloc la (+ lout 1)
      (let a (build (la) (- n 1) (+ s 1))
        (letloc lb (after Tree la)
          (let b (build (lb) (- n 1) (* s 2))
            (Node lout a b)))))))
(define (copy lin lout) ((t (Tree lin))) (Tree lout)
  (case t
    ((Leaf v) (let w (+ v 1) (Leaf lout w)))
    ((Node (a la) (b lb))
      (letloc oa (+ lout 1)
        (let x (copy (la oa) a)
          (letloc ob (after Tree oa)
            (let y (copy (lb ob) b) (Node lout x y))))))))
""",
    ("Tree", Layout.FACTORED): """
(define (build lout) ((n Int) (s Int)) (Tree lout)
  (letloc ld (projTagLoc lout)
    (letloc li (projFieldLoc Leaf 0 lout)
      (if (<= n 0) (Leaf lout s)
        (letloc lda (+ ld 1)
          (letloc la (introLocVec lda ((Leaf 0 li)) Tree)
            (let a (build (la) (- n 1) (+ s 1))
              (letloc lb (after Tree la)
                (let b (build (lb) (- n 1) (* s 2))
                  (Node lout a b))))))))))
(define (copy lin lout) ((t (Tree lin))) (Tree lout)
  (letloc ld (projTagLoc lout)
    (letloc li (projFieldLoc Leaf 0 lout)
      (case t
        ((Leaf v) (let w (+ v 1) (Leaf lout w)))
        ((Node (a la) (b lb))
          (letloc lda (+ ld 1)
            (letloc oa (introLocVec lda ((Leaf 0 li)) Tree)
              (let x (copy (la oa) a)
                (letloc ob (after Tree oa)
                  (let y (copy (lb ob) b) (Node lout x y)))))))))))
""",
    ("List", Layout.FLAT): """
(define (build lout) ((n Int) (s Int)) (List lout)
  (if (<= n 0) (Nil lout)
    (letloc ls (+ lout 1)
      (letloc lt (+ ls 1)
        (let t (build (lt) (- n 1) (+ s 3)) (Cons lout s t))))))
(define (copy lin lout) ((t (List lin))) (List lout)
  (case t
    ((Nil) (Nil lout))
    ((Cons v (u lu))
      (letloc os (+ lout 1)
        (letloc ot (+ os 1)
          (let w (+ v 1)
            (let x (copy (lu ot) u) (Cons lout w x))))))))
""",
    ("List", Layout.FACTORED): """
(define (build lout) ((n Int) (s Int)) (List lout)
  (letloc ld (projTagLoc lout)
    (if (<= n 0) (Nil lout)
      (letloc lh (projFieldLoc Cons 0 lout)
        (letloc ld1 (+ ld 1)
          (letloc lh1 (+ lh 1)
            (letloc lt (introLocVec ld1 ((Cons 0 lh1)) List)
              (let t (build (lt) (- n 1) (+ s 3)) (Cons lout s t)))))))))
(define (copy lin lout) ((t (List lin))) (List lout)
  (letloc ld (projTagLoc lout)
    (case t
      ((Nil) (Nil lout))
      ((Cons v (u lu))
        (letloc lh (projFieldLoc Cons 0 lout)
          (letloc ld1 (+ ld 1)
            (letloc lh1 (+ lh 1)
              (letloc ot (introLocVec ld1 ((Cons 0 lh1)) List)
                (let w (+ v 1)
                  (let x (copy (lu ot) u) (Cons lout w x)))))))))))
""",
}

_SUMS = {
    "Tree": """
(define (sum lin) ((t (Tree lin))) Int
  (case t
    ((Leaf v) v)
    ((Node (a la) (b lb)) (+ (sum (la) a) (sum (lb) b)))))
""",
    "List": """
(define (sum lin) ((t (List lin))) Int
  (case t
    ((Nil) 0)
    ((Cons v (u lu)) (+ v (sum (lu) u)))))
""",
}

_FIRST_FIELD = {"Tree": "Leaf 0", "List": "Cons 0"}


def _alloc(datatype: str, layout: Layout, suffix: str, loc: str, body: str) -> str:
    if layout is Layout.FLAT:
        return f"(letregion r{suffix} (letloc {loc} (start r{suffix}) {body}))"
    return (
        f"(letregion rt{suffix} (letregion rf{suffix} "
        f"(letloc {loc} (start rt{suffix} (({_FIRST_FIELD[datatype]} rf{suffix}))) {body})))"
    )


def template_program(datatype: str, layout: Layout, kind: str, n: int, s: int) -> SocalProgram:
    """
    A recursive program over the built-in ``Tree`` or ``List`` schema.

    :param kind: ``build`` returns the built value, ``sum`` folds it to an
        integer and ``copy`` maps it into fresh regions, adding one to every scalar
    :param n: Recursion depth (tree) or length (list)
    :param s: Seed of the scalar payloads
    """
    build = f"(build (l) {n} {s})"
    if kind == "build":
        main = _alloc(datatype, layout, "", "l", build)
    elif kind == "sum":
        main = _alloc(datatype, layout, "", "l", f"(let t {build} (sum (l) t))")
    elif kind == "copy":
        inner = _alloc(datatype, layout, "b", "m", "(copy (l m) t)")
        main = _alloc(datatype, layout, "a", "l", f"(let t {build} {inner})")
    else:
        raise InvalidArgument(f"unknown template {kind!r}")
    text = _FUNCTIONS[(datatype, layout)] + _SUMS[datatype] + f"(main {main})\n"
    return parse_socal(text, FUZZ_SCHEMAS[(datatype, layout)])


# composed programs: random nestings of let, if, case, letloc and calls over the template functions

class _Composer:
    """
    Writes random well-typed programs over one ``(datatype, layout)``.

    Regions are only introduced outside ``if`` and ``case`` arms, so every arm
    leaves the allocation state the same. Packed values are written at a
    location that is fresh and at the focus; readable values live in regions
    allocated earlier.
    """
    __slots__ = ["rng", "datatype", "layout", "counter", "helpers"]

    def __init__(self, rng: np.random.Generator, datatype: str, layout: Layout):
        self.rng = rng
        self.datatype = datatype
        self.layout = layout
        self.counter = 0
        # (name, reads a packed argument)
        self.helpers: list[tuple[str, bool]] = []

    def fresh(self, prefix: str) -> str:
        self.counter += 1
        return f"{prefix}{self.counter}"

    def pick(self, options: list):
        return options[int(self.rng.integers(len(options)))]

    def literal(self) -> str:
        return str(int(self.rng.integers(-9, 10)))

    def allocate(self, loc: str, body: str) -> str:
        return _alloc(self.datatype, self.layout, self.fresh(""), loc, body)

    # integer expressions

    def int_expr(self, depth: int, ints: tuple, packed: tuple, alloc: bool = False) -> str:
        choices = ["lit"] + (["var"] if ints else [])
        if depth > 0:
            choices += ["prim", "if", "let"]
            if [h for h in self.helpers if packed or not h[1]]:
                choices.append("call")
            if packed:
                choices += ["sum", "case"]
            if alloc:
                choices.append("alloc")
        kind = self.pick(choices)
        d = depth - 1
        if kind == "lit":
            return self.literal()
        if kind == "var":
            return self.pick(list(ints))
        if kind == "prim":
            return f"({self.pick(['+', '-', '*'])} {self.int_expr(d, ints, packed)} {self.int_expr(d, ints, packed)})"
        if kind == "if":
            return f"(if {self.condition(d, ints, packed)} {self.int_expr(d, ints, packed)} {self.int_expr(d, ints, packed)})"
        if kind == "let":
            x = self.fresh("x")
            rhs = self.int_expr(d, ints, packed, alloc)
            return f"(let {x} {rhs} {self.int_expr(d, ints + (x,), packed, alloc)})"
        if kind == "call":
            return self.call(d, ints, packed)
        if kind == "sum":
            t, l = self.pick(list(packed))
            return f"(sum ({l}) {t})"
        if kind == "case":
            return self.case(ints, packed, lambda i, p: self.int_expr(d, i, p))
        t, l = self.fresh("t"), self.fresh("l")
        body = f"(let {t} {self.packed_expr(d, l, ints, packed)} {self.int_expr(d, ints, packed + ((t, l),), True)})"
        return self.allocate(l, body)

    def condition(self, depth: int, ints: tuple, packed: tuple) -> str:
        op = self.pick(["<=", "<", "="])
        return f"({op} {self.int_expr(depth, ints, packed)} {self.int_expr(depth, ints, packed)})"

    def call(self, depth: int, ints: tuple, packed: tuple) -> str:
        name, reads = self.pick([h for h in self.helpers if packed or not h[1]])
        if reads:
            t, l = self.pick(list(packed))
            return f"({name} ({l}) {t} {self.int_expr(depth, ints, packed)})"
        return f"({name} () {self.int_expr(depth, ints, packed)} {self.int_expr(depth, ints, packed)})"

    def case(self, ints: tuple, packed: tuple, arm) -> str:
        """A case over a readable value; ``arm(ints, packed)`` writes each branch body"""
        t, _ = self.pick(list(packed))
        v = self.fresh("v")
        if self.datatype == "Tree":
            a, la, b, lb = self.fresh("a"), self.fresh("la"), self.fresh("b"), self.fresh("lb")
            return (
                f"(case {t} ((Leaf {v}) {arm(ints + (v,), packed)}) "
                f"((Node ({a} {la}) ({b} {lb})) {arm(ints, packed + ((a, la), (b, lb)))}))"
            )
        u, lu = self.fresh("u"), self.fresh("lu")
        return f"(case {t} ((Nil) {arm(ints, packed)}) ((Cons {v} ({u} {lu})) {arm(ints + (v,), packed + ((u, lu),))}))"

    # packed expressions, each writing one value at ``out``

    def packed_expr(self, depth: int, out: str, ints: tuple, packed: tuple) -> str:
        choices = ["base", "build"]
        if depth > 0:
            choices += ["cons", "if", "let"]
            if packed:
                choices += ["copy", "case"]
        kind = self.pick(choices)
        d = depth - 1
        if kind == "base":
            return self.base(out, ints, packed)
        if kind == "build":
            n = int(self.rng.integers(0, 3 if self.datatype == "Tree" else 5))
            return f"(build ({out}) {n} {self.int_expr(1, ints, packed)})"
        if kind == "cons":
            return self.cons(d, out, ints, packed)
        if kind == "if":
            then, orelse = self.packed_expr(d, out, ints, packed), self.packed_expr(d, out, ints, packed)
            return f"(if {self.condition(d, ints, packed)} {then} {orelse})"
        if kind == "let":
            x = self.fresh("x")
            return f"(let {x} {self.int_expr(d, ints, packed)} {self.packed_expr(d, out, ints + (x,), packed)})"
        if kind == "copy":
            t, l = self.pick(list(packed))
            return f"(copy ({l} {out}) {t})"
        return self.case(ints, packed, lambda i, p: self.packed_expr(d, out, i, p))

    def base(self, out: str, ints: tuple, packed: tuple) -> str:
        """``Leaf`` with a computed payload, or ``Nil``"""
        if self.datatype == "List":
            if self.layout is Layout.FLAT:
                return f"(Nil {out})"
            return f"(letloc {self.fresh('ld')} (projTagLoc {out}) (Nil {out}))"
        s = self.fresh("s")
        write = f"(let {s} {self.int_expr(1, ints, packed)} (Leaf {out} {s}))"
        if self.layout is Layout.FLAT:
            return write
        return f"(letloc {self.fresh('ld')} (projTagLoc {out}) (letloc {self.fresh('li')} (projFieldLoc Leaf 0 {out}) {write}))"

    def cons(self, depth: int, out: str, ints: tuple, packed: tuple) -> str:
        """``Node`` or ``Cons`` whose packed fields are written by nested packed expressions"""
        if self.datatype == "Tree":
            a, b, la, lb = self.fresh("a"), self.fresh("b"), self.fresh("la"), self.fresh("lb")
            tail = (
                f"(let {a} {self.packed_expr(depth, la, ints, packed)} "
                f"(letloc {lb} (after Tree {la}) (let {b} {self.packed_expr(depth, lb, ints, packed)} (Node {out} {a} {b}))))"
            )
            if self.layout is Layout.FLAT:
                return f"(letloc {la} (+ {out} 1) {tail})"
            ld, li, lda = self.fresh("ld"), self.fresh("li"), self.fresh("ld")
            return (
                f"(letloc {ld} (projTagLoc {out}) (letloc {li} (projFieldLoc Leaf 0 {out}) "
                f"(letloc {lda} (+ {ld} 1) (letloc {la} (introLocVec {lda} ((Leaf 0 {li})) Tree) {tail}))))"
            )
        s, u, lt = self.fresh("s"), self.fresh("u"), self.fresh("lt")
        tail = (
            f"(let {s} {self.int_expr(depth, ints, packed)} "
            f"(let {u} {self.packed_expr(depth, lt, ints, packed)} (Cons {out} {s} {u})))"
        )
        if self.layout is Layout.FLAT:
            ls = self.fresh("ls")
            return f"(letloc {ls} (+ {out} 1) (letloc {lt} (+ {ls} 1) {tail}))"
        ld, lh, ld1, lh1 = self.fresh("ld"), self.fresh("lh"), self.fresh("ld"), self.fresh("lh")
        return (
            f"(letloc {ld} (projTagLoc {out}) (letloc {lh} (projFieldLoc Cons 0 {out}) "
            f"(letloc {ld1} (+ {ld} 1) (letloc {lh1} (+ {lh} 1) "
            f"(letloc {lt} (introLocVec {ld1} ((Cons 0 {lh1})) List) {tail})))))"
        )

    # whole programs

    def helper(self) -> str:
        """An Int function over earlier helpers, optionally reading one packed argument"""
        reads = bool(self.rng.random() < 0.5)
        name = self.fresh("g" if reads else "h")
        if reads:
            body = self.int_expr(2, ("p",), (("t", "lin"),))
            text = f"(define ({name} lin) ((t ({self.datatype} lin)) (p Int)) Int {body})"
        else:
            body = self.int_expr(2, ("p", "q"), ())
            text = f"(define ({name}) ((p Int) (q Int)) Int {body})"
        self.helpers.append((name, reads))
        return text

    def main_packed(self, depth: int, sources: int, packed: tuple = ()) -> str:
        out = self.fresh("l")
        if sources == 0:
            return self.allocate(out, self.packed_expr(depth, out, (), packed))
        t = self.fresh("t")
        rest = self.main_packed(depth, sources - 1, packed + ((t, out),))
        return self.allocate(out, f"(let {t} {self.packed_expr(depth, out, (), packed)} {rest})")

    def main_int(self, depth: int) -> str:
        t, l = self.fresh("t"), self.fresh("l")
        return self.allocate(l, f"(let {t} {self.packed_expr(depth, l, (), ())} {self.int_expr(depth, (), ((t, l),), True)})")


def composed_program(rng: np.random.Generator) -> tuple[str, SocalProgram]:
    """
    A random program nesting let, if, case, letloc and calls; returns its kind and the program.

    The template functions are always defined and may be called; up to two
    extra Int helpers are generated before ``main``.
    """
    datatype = ("Tree", "List")[int(rng.integers(2))]
    layout = (Layout.FLAT, Layout.FACTORED)[int(rng.integers(2))]
    composer = _Composer(rng, datatype, layout)
    helpers = [composer.helper() for _ in range(int(rng.integers(0, 3)))]
    if rng.random() < 0.5:
        kind, main = "composed-int", composer.main_int(3)
    else:
        kind, main = "composed-packed", composer.main_packed(2, int(rng.integers(0, 3)))
    text = _FUNCTIONS[(datatype, layout)] + _SUMS[datatype] + "\n".join(helpers) + f"\n(main {main})\n"
    return kind, parse_socal(text, FUZZ_SCHEMAS[(datatype, layout)])


# checks

def _buffer_regions(plan: ShapePlan, here: Concrete, out: dict[int, str]) -> None:
    if isinstance(here, CLoc):
        out[plan.base] = here.region
        return
    out[plan.base] = here.tag.region
    for k, j, c in here.entries:
        fp = plan.by_name[k].fields[j]
        if fp.child is not None:
            _buffer_regions(fp.child, c, out)
        else:
            out[fp.buffer] = c.region


def bridge_mismatch(run: RunResult, datatype: str, value: Value) -> str | None:
    """Compare each region of the final store with the buffer ``serialize`` writes for ``value``"""
    schema = run.state.schema
    root = serialize(schema, datatype, value, RegionStore(), random_access=False)
    plan = compile_plan(schema, datatype)
    regions: dict[int, str] = {}
    _buffer_regions(plan, run.state.locmap[run.value.loc], regions)
    if sorted(regions) != list(plan.buffers):
        return f"regions cover buffers {sorted(regions)}, expected {list(plan.buffers)}"
    for b, region in sorted(regions.items()):
        got = region_bytes(run.state, region)
        want = root.store.compact(root.regions[b])
        if got != want:
            return f"buffer {b} (region {region}): store {got.hex()} but serialize wrote {want.hex()}"
    return None


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class Counterexample:
    index: int
    kind: str
    check: str
    message: str
    program: str

    def to_json(self) -> dict:
        return {"index": self.index, "kind": self.kind, "check": self.check, "message": self.message,
                "program": self.program}


@dataclass(slots=True)
class FuzzSummary:
    seed: int
    count: int
    passed: int = 0
    steps: int = 0
    bridged: int = 0
    kinds: dict[str, int] = field(default_factory=dict)
    failures: list[Counterexample] = field(default_factory=list)
    elapsed: float = 0.0

    def __str__(self) -> str:
        kinds = ", ".join(f"{k} {v}" for k, v in sorted(self.kinds.items()))
        return (
            f"seed {self.seed}: {self.passed}/{self.count} programs passed ({kinds}); "
            f"{self.steps} steps checked, {self.bridged} stores matched serialize, "
            f"{len(self.failures)} counterexamples in {self.elapsed:.2f} s"
        )

    def to_json(self) -> dict:
        return {
            "seed": self.seed, "count": self.count, "passed": self.passed, "steps": self.steps,
            "bridged": self.bridged, "kinds": dict(sorted(self.kinds.items())),
            "failures": [f.to_json() for f in self.failures], "elapsed": self.elapsed,
        }


def check_program(program: SocalProgram, expected: Value | None = None, datatype: str | None = None):
    """
    Typecheck, run with the well-formedness monitor on, and compare with the erased result.

    :param expected: The value the program must build; enables the bridge check
    :return: (name of the failed check or None, message, run result or None)
    """
    result = typecheck(program)
    if not result.accepted:
        return "typecheck", str(result.rejection), None
    try:
        run = interpret(program, check=True, max_steps=MAX_STEPS)
    except Stuck as e:
        return "progress", str(e), None
    except IllFormedStore as e:
        return "preservation", str(e), None
    erased = evaluate_erased(program)
    got = run.decoded()
    if got != erased:
        return "erasure", f"store semantics gave {got!r:.120}, erased semantics {erased!r:.120}", run
    if expected is not None:
        if got != expected:
            return "erasure", f"program built {got!r:.120}, not {expected!r:.120}", run
        if isinstance(run.value, LocVal):
            mismatch = bridge_mismatch(run, datatype, expected)
            if mismatch is not None:
                return "bridge", mismatch, run
    return None, "", run


def _pick_schema(rng: np.random.Generator, extra: AdtSchema | None):
    pool = [(schema, name) for (name, _), schema in FUZZ_SCHEMAS.items()]
    if extra is not None:
        pool.extend((extra, dt.name) for dt in extra.datatypes)
    return pool[int(rng.integers(len(pool)))]


def fuzz_type_safety(seed: int, count: int, schema: AdtSchema | None = None) -> FuzzSummary:
    """
    Generate ``count`` well-typed programs and check type safety on each.

    A quarter of the programs write a random value constructor by constructor
    (their final store is also compared with ``serialize``), a quarter
    instantiate the recursive build, sum and copy templates and the rest are
    composed from random nestings of let, if, case, letloc and calls over those
    templates and generated helpers. Every program must typecheck,
    pass the well-formedness monitor after every step, reach a value and agree
    with the location-erased evaluation.

    Parameters
    ----------
    seed : int
        Seed of the numpy generator.
    count : int
        Number of programs, at least 1.
    schema : AdtSchema, optional
        Extra datatypes for the constructor-only programs.

    Raises
    ------
    FuzzFailure
        Some program failed a check; ``summary`` is attached.
    """
    if count < 1:
        raise InvalidArgument(f"count must be at least 1, got {count}")
    rng = np.random.default_rng(seed)
    summary = FuzzSummary(seed, count)
    started = perf_counter()
    for i in range(count):
        roll = rng.random()
        if roll < 0.25:
            target, datatype = _pick_schema(rng, schema)
            value = random_value(target, datatype, rng, max_nodes=24, max_depth=8, int_range=(-50, 50))
            program = program_for_value(target, datatype, value)
            kind, expected = "value", value
        elif roll < 0.5:
            datatype = ("Tree", "List")[int(rng.integers(2))]
            layout = (Layout.FLAT, Layout.FACTORED)[int(rng.integers(2))]
            kind = ("build", "sum", "copy")[int(rng.integers(3))]
            n = int(rng.integers(0, 4 if datatype == "Tree" else 9))
            program = template_program(datatype, layout, kind, n, int(rng.integers(-20, 21)))
            expected = None
        else:
            kind, program = composed_program(rng)
            datatype, expected = None, None
        summary.kinds[kind] = summary.kinds.get(kind, 0) + 1
        failed, message, run = check_program(program, expected, datatype)
        if run is not None:
            summary.steps += run.steps
        if failed is None:
            summary.passed += 1
            if expected is not None and isinstance(run.value, LocVal):
                summary.bridged += 1
        else:
            logger.warning("program %d (%s) failed %s: %s", i, kind, failed, message)
            summary.failures.append(Counterexample(i, kind, failed, message, show_program(program)))
        if (i + 1) % 1000 == 0:
            logger.info("fuzzed %d/%d programs, %d failures", i + 1, count, len(summary.failures))
    summary.elapsed = perf_counter() - started
    logger.info("%s", summary)
    if summary.failures:
        error = FuzzFailure(f"{len(summary.failures)} counterexamples; first: {summary.failures[0].message}")
        error.summary = summary
        raise error
    return summary


def fuzz_negative_control(seed: int, count: int) -> int:
    """
    Programs whose ``after`` reads an unwritten location; all must be rejected.

    Each is also run unchecked, where evaluation must get stuck computing the
    end witness. Returns the number of programs rejected.
    """
    if count < 1:
        raise InvalidArgument(f"count must be at least 1, got {count}")
    rng = np.random.default_rng(seed)
    rejected = 0
    for i in range(count):
        layout = (Layout.FLAT, Layout.FACTORED)[int(rng.integers(2))]
        schema = FUZZ_SCHEMAS[("Tree", layout)]
        left, right = (random_value(schema, "Tree", rng, max_nodes=8, max_depth=4) for _ in range(2))
        program = program_for_value(schema, "Tree", Value("Node", (left, right)), fault="after")
        result = typecheck(program)
        if result.accepted or result.rejection.reason is not Reason.UNWRITTEN_DEPENDENCY:
            raise FuzzFailure(f"faulty program {i} was not rejected for an unwritten dependency: {result.rejection}")
        try:
            interpret(program, check=False, max_steps=MAX_STEPS)
        except Stuck as e:
            if e.rule != "D-LetLoc-After":
                raise FuzzFailure(f"faulty program {i} got stuck in {e.rule}, not at the after binding") from None
        else:
            raise FuzzFailure(f"faulty program {i} ran to a value without its dependency")
        rejected += 1
    logger.info("negative control: %d/%d faulty programs rejected", rejected, count)
    return rejected
