"""
Static environments of the location calculus and the transfer functions over them.

Σ (``sigma``), C (``constraints``), A (``focus``) and N (``nursery``) are kept
together in :class:`StaticEnvs`; the term environment Γ is lexical and lives
with the checker. Every location form and every constructor write has one
transfer function here. The checker calls them with ``strict=True`` and turns
a :class:`Violation` into a rejection; the interpreter calls them with
``strict=False`` to keep its ghost environments in step with evaluation.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from packedadt.schema.adt import AdtSchema, Layout, Packed, ScalarInt
from packedadt.socal.syntax import StartLoc

INT_TYPE = "Int"


class Reason(Enum):
    WRITE_TO_WRITTEN = "WriteToWrittenLocation"
    WRITE_NOT_AT_FOCUS = "WriteNotAtFocus"
    UNWRITTEN_DEPENDENCY = "UnwrittenDependency"
    SHAPE_MISMATCH = "ShapeMismatch"
    BAD_PROJECTION_KEY = "BadProjectionKey"
    MISSING_BRANCH = "MissingBranch"
    SELF_FIELD_IN_VECTOR = "SelfRecursiveFieldInVector"
    TYPE_MISMATCH = "TypeMismatch"
    ARITY_MISMATCH = "ArityMismatch"
    BRANCH_MISMATCH = "BranchMismatch"
    OUTPUT_NOT_WRITTEN = "OutputNotWritten"


class Violation(Exception):
    """A premise of a typing rule does not hold"""

    def __init__(self, reason: Reason, rule: str, premise: str):
        self.reason = reason
        self.rule = rule
        self.premise = premise
        super().__init__(f"{reason.value} in {rule}: {premise}")


# constraints

@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class Start:
    regions: tuple[str, ...]

    def __str__(self) -> str:
        return f"start {' '.join(self.regions)}"


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class Bump:
    loc: str

    def __str__(self) -> str:
        return f"{self.loc}+1"


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class After:
    datatype: str
    loc: str

    def __str__(self) -> str:
        return f"after({self.datatype}@{self.loc})"


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class TagOf:
    loc: str

    def __str__(self) -> str:
        return f"projTagLoc {self.loc}"


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class FieldOf:
    ctor: str
    index: int
    loc: str

    def __str__(self) -> str:
        return f"projFieldLoc ({self.ctor},{self.index}) {self.loc}"


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class Intro:
    tag: str
    entries: tuple[tuple[str, int, str], ...]

    def __str__(self) -> str:
        inner = ", ".join(f"({k},{j}) -> {l}" for k, j, l in self.entries)
        return f"introLocVec({self.tag}, [{inner}])"


Constraint = Start | Bump | After | TagOf | FieldOf | Intro


# location shapes

@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class Single:
    region: str


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class Factored:
    datatype: str
    tag: str
    entries: tuple[tuple[str, int, str], ...]

    def entry(self, ctor: str, index: int) -> str | None:
        for k, j, loc in self.entries:
            if k == ctor and j == index:
                return loc
        return None


Shape = Single | Factored


@dataclass(slots=True)
class StaticEnvs:
    sigma: dict[str, str] = field(default_factory=dict)
    constraints: dict[str, Constraint] = field(default_factory=dict)
    focus: dict[str, str | None] = field(default_factory=dict)
    nursery: set[str] = field(default_factory=set)
    shapes: dict[str, Shape] = field(default_factory=dict)

    def copy(self) -> "StaticEnvs":
        return StaticEnvs(
            dict(self.sigma), dict(self.constraints), dict(self.focus), set(self.nursery), dict(self.shapes)
        )

    def focus_json(self) -> dict[str, str | None]:
        return {r: self.focus[r] for r in sorted(self.focus)}

    def nursery_json(self) -> list[str]:
        return sorted(self.nursery)


def datatype_keys(schema: AdtSchema, datatype: str) -> list[tuple[str, int, ScalarInt | Packed]]:
    """Non-self fields of every constructor, in declaration order"""
    dt = schema.datatype(datatype)
    return [
        (ctor.name, j, f)
        for ctor in dt.constructors
        for j, f in enumerate(ctor.fields)
        if not dt.is_self(f)
    ]


def leaves(envs: StaticEnvs, loc: str) -> list[tuple[str, str, frozenset]]:
    """(component, region, ids on the path from ``loc``) for each single component"""
    out = []
    pending = [(loc, frozenset([loc]))]
    while pending:
        cur, path = pending.pop()
        shape = envs.shapes.get(cur)
        if isinstance(shape, Single):
            out.append((cur, shape.region, path))
        elif isinstance(shape, Factored):
            pending.append((shape.tag, path | {shape.tag}))
            for _, _, comp in reversed(shape.entries):
                pending.append((comp, path | {comp}))
    return out


def regions_of(envs: StaticEnvs, loc: str) -> list[str]:
    return [region for _, region, _ in leaves(envs, loc)]


def at_focus(envs: StaticEnvs, loc: str, parts: list[str] | None = None) -> bool:
    """Every region of ``loc`` (or of the given components of it) has its focus on the path to that component"""
    roots = parts if parts is not None else [loc]
    for root in roots:
        for _, region, path in leaves(envs, root):
            if envs.focus.get(region) not in path | {loc}:
                return False
    return True


def _set_focus(envs: StaticEnvs, loc: str) -> None:
    for region in regions_of(envs, loc):
        envs.focus[region] = loc


def _check(strict: bool, ok: bool, reason: Reason, rule: str, premise: str) -> None:
    if strict and not ok:
        raise Violation(reason, rule, premise)


def _not_fresh(envs: StaticEnvs, loc: str, rule: str, what: str) -> Violation:
    if loc in envs.sigma:
        return Violation(Reason.WRITE_TO_WRITTEN, rule, f"{what} {loc} is already written")
    return Violation(Reason.WRITE_NOT_AT_FOCUS, rule, f"{what} {loc} is not an allocated, unwritten location")


def _require_fresh(envs: StaticEnvs, loc: str, strict: bool, rule: str, what: str) -> None:
    if strict and loc not in envs.nursery:
        raise _not_fresh(envs, loc, rule, what)


def shape_for(envs: StaticEnvs, schema: AdtSchema, datatype: str, name: str, region_for: Callable[[str], str]) -> Shape:
    """
    Register a fresh shape for a location of ``datatype``.

    :param name: Id of the new location; components are named below it
    :param region_for: Region of each single component, given its id
    """
    dt = schema.datatype(datatype)
    if dt.layout is Layout.FLAT:
        shape = Single(region_for(name))
    else:
        tag = f"{name}.tag"
        envs.shapes[tag] = Single(region_for(tag))
        entries = []
        for ctor, j, f in datatype_keys(schema, datatype):
            comp = f"{name}.{ctor}.{j}"
            if isinstance(f, Packed):
                shape_for(envs, schema, f.datatype, comp, region_for)
            else:
                envs.shapes[comp] = Single(region_for(comp))
            entries.append((ctor, j, comp))
        shape = Factored(datatype, tag, tuple(entries))
    envs.shapes[name] = shape
    return shape


def clone_shape(envs: StaticEnvs, source: str, name: str) -> Shape:
    """Copy the shape of ``source`` under fresh ids rooted at ``name``, keeping every region"""
    shape = envs.shapes[source]
    if isinstance(shape, Single):
        clone = Single(shape.region)
    else:
        tag = f"{name}.tag"
        clone_shape(envs, shape.tag, tag)
        entries = []
        for ctor, j, comp in shape.entries:
            fresh = f"{name}.{ctor}.{j}"
            clone_shape(envs, comp, fresh)
            entries.append((ctor, j, fresh))
        clone = Factored(shape.datatype, tag, tuple(entries))
    envs.shapes[name] = clone
    return clone


def _check_keys(
    schema: AdtSchema, datatype: str, keys: list[tuple[str, int]], strict: bool, rule: str
) -> None:
    if not strict:
        return
    dt = schema.datatype(datatype)
    for ctor, j in keys:
        if ctor not in (c.name for c in dt.constructors):
            raise Violation(Reason.BAD_PROJECTION_KEY, rule, f"{ctor} is not a constructor of {datatype}")
        fields = dt.constructor(ctor).fields
        if not 0 <= j < len(fields):
            raise Violation(Reason.BAD_PROJECTION_KEY, rule, f"{ctor} has no field {j}")
        if dt.is_self(fields[j]):
            raise Violation(Reason.SELF_FIELD_IN_VECTOR, rule, f"field ({ctor},{j}) is {datatype} itself")
    if len(set(keys)) != len(keys):
        raise Violation(Reason.SHAPE_MISMATCH, rule, "a key is given twice")
    expected = {(c, j) for c, j, _ in datatype_keys(schema, datatype)}
    missing = expected - set(keys)
    if missing:
        names = ", ".join(f"({c},{j})" for c, j in sorted(missing))
        raise Violation(Reason.SHAPE_MISMATCH, rule, f"factored {datatype} location lacks {names}")


def _layout(schema: AdtSchema, datatype: str) -> Layout:
    return schema.datatype(datatype).layout


def _start_datatype(schema: AdtSchema, start: StartLoc) -> str | None:
    if start.datatype is not None:
        return start.datatype
    if start.entries:
        return schema.owner(start.entries[0].ctor).name
    return None


# transfer functions

def intro_region(envs: StaticEnvs, region: str) -> None:
    envs.focus[region] = None


def bind_start(
    envs: StaticEnvs,
    schema: AdtSchema,
    loc: str,
    start: StartLoc,
    resolve: Callable[[str], str],
    strict: bool,
) -> None:
    """``letloc loc = start r`` and its factored form; ``resolve`` maps region names to region ids"""
    rule = "T-LetLoc-Start"
    regions: list[str] = []
    pending = [(loc, start)]
    while pending:
        name, node = pending.pop()
        region = resolve(node.region)
        if not node.factored:
            envs.shapes[name] = Single(region)
            regions.append(region)
            continue
        datatype = _start_datatype(schema, node)
        if datatype is None:
            raise Violation(Reason.SHAPE_MISMATCH, rule, f"cannot tell the datatype of factored start at {name}")
        _check(
            strict, _layout(schema, datatype) is Layout.FACTORED, Reason.SHAPE_MISMATCH, rule,
            f"{datatype} is flat, its start takes no entry list",
        )
        _check_keys(schema, datatype, [(e.ctor, e.index) for e in node.entries], strict, rule)
        tag = f"{name}.tag"
        envs.shapes[tag] = Single(region)
        regions.append(region)
        given = {(e.ctor, e.index): e.target for e in node.entries}
        entries = []
        for ctor, j, f in datatype_keys(schema, datatype):
            target = given.get((ctor, j))
            if target is None:
                continue
            comp = f"{name}.{ctor}.{j}"
            wants_factored = isinstance(f, Packed) and _layout(schema, f.datatype) is Layout.FACTORED
            _check(
                strict, wants_factored == target.factored, Reason.SHAPE_MISMATCH, rule,
                f"entry ({ctor},{j}) needs a {'factored' if wants_factored else 'single'} start",
            )
            entries.append((ctor, j, comp))
            pending.append((comp, target))
        envs.shapes[name] = Factored(datatype, tag, tuple(entries))
    for region in regions:
        _check(
            strict, region in envs.focus and envs.focus[region] is None, Reason.WRITE_NOT_AT_FOCUS, rule,
            f"region {region} already has allocations",
        )
    envs.constraints[loc] = Start(tuple(regions))
    envs.nursery.add(loc)
    for region in regions:
        envs.focus[region] = loc


def bind_bump(envs: StaticEnvs, loc: str, base: str, strict: bool) -> None:
    """``letloc loc = base + 1``"""
    rule = "T-LetLoc-Tag"
    shape = envs.shapes.get(base)
    if not isinstance(shape, Single):
        raise Violation(Reason.SHAPE_MISMATCH, rule, f"{base} is not a single location")
    _require_fresh(envs, base, strict, rule, "bumped location")
    _check(
        strict, envs.focus.get(shape.region) == base, Reason.WRITE_NOT_AT_FOCUS, rule,
        f"{base} is not the focus of {shape.region}",
    )
    envs.shapes[loc] = Single(shape.region)
    envs.constraints[loc] = Bump(base)
    envs.nursery.add(loc)
    envs.focus[shape.region] = loc


def bind_after(envs: StaticEnvs, schema: AdtSchema, loc: str, datatype: str, base: str, strict: bool) -> None:
    """``letloc loc = after(datatype @ base)``"""
    rule = "T-LetLoc-After"
    if base not in envs.shapes:
        raise Violation(Reason.UNWRITTEN_DEPENDENCY, rule, f"{base} is not a location")
    if strict:
        if base not in envs.sigma:
            raise Violation(Reason.UNWRITTEN_DEPENDENCY, rule, f"{base} is not written yet")
        if envs.sigma[base] != datatype:
            raise Violation(Reason.TYPE_MISMATCH, rule, f"{base} holds {envs.sigma[base]}, not {datatype}")
    factored = isinstance(envs.shapes[base], Factored)
    _check(
        strict, factored == (_layout(schema, datatype) is Layout.FACTORED), Reason.SHAPE_MISMATCH, rule,
        f"{datatype} is {_layout(schema, datatype).name.lower()} but {base} is a "
        f"{'factored' if factored else 'single'} location",
    )
    _check(strict, at_focus(envs, base), Reason.WRITE_NOT_AT_FOCUS, rule, f"{base} is not the focus of its regions")
    clone_shape(envs, base, loc)
    envs.constraints[loc] = After(datatype, base)
    envs.nursery.add(loc)
    _set_focus(envs, loc)


def _project(envs: StaticEnvs, base: str, comp: str, constraint: Constraint, strict: bool, rule: str) -> str:
    _require_fresh(envs, base, strict, rule, "projected location")
    _check(strict, comp not in envs.sigma, Reason.WRITE_TO_WRITTEN, rule, f"component {comp} is already written")
    envs.constraints.setdefault(comp, constraint)
    envs.nursery.add(comp)
    _set_focus(envs, comp)
    return comp


def bind_proj_tag(envs: StaticEnvs, base: str, strict: bool) -> str:
    """``letloc l = projTagLoc base``; returns the tag component, which ``l`` names"""
    rule = "T-LetLoc-ProjTag"
    shape = envs.shapes.get(base)
    if not isinstance(shape, Factored):
        raise Violation(Reason.SHAPE_MISMATCH, rule, f"{base} is not a factored location")
    return _project(envs, base, shape.tag, TagOf(base), strict, rule)


def bind_proj_field(envs: StaticEnvs, schema: AdtSchema, base: str, ctor: str, index: int, strict: bool) -> str:
    """``letloc l = projFieldLoc (ctor, index) base``; returns the field component"""
    rule = "T-LetLoc-ProjField"
    shape = envs.shapes.get(base)
    if not isinstance(shape, Factored):
        raise Violation(Reason.SHAPE_MISMATCH, rule, f"{base} is not a factored location")
    dt = schema.datatype(shape.datatype)
    if ctor not in (c.name for c in dt.constructors):
        raise Violation(Reason.BAD_PROJECTION_KEY, rule, f"{ctor} is not a constructor of {dt.name}")
    fields = dt.constructor(ctor).fields
    if not 0 <= index < len(fields):
        raise Violation(Reason.BAD_PROJECTION_KEY, rule, f"{ctor} has no field {index}")
    if dt.is_self(fields[index]):
        raise Violation(Reason.SELF_FIELD_IN_VECTOR, rule, f"field ({ctor},{index}) is {dt.name} itself")
    comp = shape.entry(ctor, index)
    if comp is None:
        raise Violation(Reason.BAD_PROJECTION_KEY, rule, f"{base} has no component ({ctor},{index})")
    return _project(envs, base, comp, FieldOf(ctor, index, base), strict, rule)


def _field_shape_ok(envs: StaticEnvs, schema: AdtSchema, comp: str, f: ScalarInt | Packed) -> bool:
    shape = envs.shapes.get(comp)
    if isinstance(f, Packed) and _layout(schema, f.datatype) is Layout.FACTORED:
        return isinstance(shape, Factored) and shape.datatype == f.datatype
    return isinstance(shape, Single)


def bind_intro(
    envs: StaticEnvs,
    schema: AdtSchema,
    loc: str,
    tag: str,
    entries: list[tuple[str, int, str]],
    datatype: str | None,
    strict: bool,
) -> None:
    """``letloc loc = introLocVec tag flds``; the components move from N into ``loc``"""
    rule = "T-LetLoc-IntroLocVec"
    if datatype is None:
        if not entries:
            raise Violation(Reason.SHAPE_MISMATCH, rule, "cannot tell the datatype of an empty location vector")
        datatype = schema.owner(entries[0][0]).name
    _check(
        strict, _layout(schema, datatype) is Layout.FACTORED, Reason.SHAPE_MISMATCH, rule,
        f"{datatype} is flat, it has no location vector",
    )
    if not isinstance(envs.shapes.get(tag), Single):
        raise Violation(Reason.SHAPE_MISMATCH, rule, f"tag location {tag} is not a single location")
    _require_fresh(envs, tag, strict, rule, "tag location")
    _check_keys(schema, datatype, [(k, j) for k, j, _ in entries], strict, rule)
    given = {(k, j): comp for k, j, comp in entries}
    ordered = []
    for ctor, j, f in datatype_keys(schema, datatype):
        comp = given.get((ctor, j))
        if comp is None:
            continue
        _check(
            strict, _field_shape_ok(envs, schema, comp, f), Reason.SHAPE_MISMATCH, rule,
            f"component {comp} does not have the shape of field ({ctor},{j})",
        )
        _check(strict, comp not in envs.sigma, Reason.WRITE_TO_WRITTEN, rule, f"component {comp} is already written")
        ordered.append((ctor, j, comp))
    envs.shapes[loc] = Factored(datatype, tag, tuple(ordered))
    envs.constraints[loc] = Intro(tag, tuple(ordered))
    envs.nursery.difference_update([tag, *(comp for _, _, comp in ordered)])
    envs.nursery.add(loc)
    _set_focus(envs, loc)


ArgRef = tuple[str, str] | None   # (datatype, location) of a located argument, None for an integer


def write_ctor(
    envs: StaticEnvs, schema: AdtSchema, loc: str, ctor: str, args: list[ArgRef], strict: bool
) -> str:
    """
    Write constructor ``ctor`` at ``loc``; returns the datatype written.

    Flat writes need the packed arguments chained from ``loc + 1 + #scalars``
    by ``after``. Factored writes need the tag and the constructor's non-self
    field components projected, the first self argument at the location
    vector introduced from ``tag + 1`` and the fields' end witnesses, and the
    rest chained by ``after``. A constructor without self arguments is written
    at the focus.
    """
    owner = schema.owner(ctor)
    rule = "T-DataConstructor-FullyFactored" if owner.layout is Layout.FACTORED else "T-DataConstructor"
    cdef = owner.constructor(ctor)
    shape = envs.shapes.get(loc)
    if shape is None:
        raise Violation(Reason.WRITE_NOT_AT_FOCUS, rule, f"{loc} is not a location")
    _check(strict, len(args) == cdef.arity, Reason.ARITY_MISMATCH, rule, f"{ctor} takes {cdef.arity} arguments")
    factored = owner.layout is Layout.FACTORED
    if strict:
        if factored != isinstance(shape, Factored) or (factored and shape.datatype != owner.name):
            raise Violation(Reason.SHAPE_MISMATCH, rule, f"{loc} does not have the shape of a {owner.name} location")
        if loc not in envs.nursery:
            raise _not_fresh(envs, loc, rule, "destination")
        for j, (f, arg) in enumerate(zip(cdef.fields, args)):
            if isinstance(f, ScalarInt):
                if arg is not None:
                    raise Violation(Reason.TYPE_MISMATCH, rule, f"field {j} of {ctor} is Int")
                continue
            if arg is None or arg[0] != f.datatype:
                raise Violation(Reason.TYPE_MISMATCH, rule, f"field {j} of {ctor} is {f.datatype}")
            if envs.sigma.get(arg[1]) != f.datatype:
                raise Violation(Reason.UNWRITTEN_DEPENDENCY, rule, f"argument at {arg[1]} is not written yet")
    if factored and isinstance(shape, Factored):
        return _write_factored(envs, schema, loc, shape, cdef, args, strict, rule)
    return _write_flat(envs, loc, shape, owner, cdef, args, strict, rule)


def _write_flat(envs, loc, shape, owner, cdef, args, strict, rule) -> str:
    scalars = sum(isinstance(f, ScalarInt) for f in cdef.fields)
    packed = [(j, a) for j, (f, a) in enumerate(zip(cdef.fields, args)) if isinstance(f, Packed) and a is not None]
    between: list[str] = []
    if packed:
        first = packed[0][1][1]
        cur, hops = first, 0
        while cur != loc and isinstance(envs.constraints.get(cur), Bump) and hops <= scalars:
            cur = envs.constraints[cur].loc
            hops += 1
            if cur != loc:
                between.append(cur)
        _check(
            strict, cur == loc and hops == 1 + scalars, Reason.WRITE_NOT_AT_FOCUS, rule,
            f"first packed field of {cdef.name} must sit at {loc}+{1 + scalars}",
        )
        for pos in between:
            _check(strict, pos in envs.nursery, Reason.WRITE_TO_WRITTEN, rule, f"scalar slot {pos} is already written")
        for (_, prev), (_, nxt) in zip(packed, packed[1:]):
            _check(
                strict, envs.constraints.get(nxt[1]) == After(prev[0], prev[1]), Reason.WRITE_NOT_AT_FOCUS, rule,
                f"{nxt[1]} must be after({prev[0]}@{prev[1]})",
            )
    else:
        _check(strict, at_focus(envs, loc), Reason.WRITE_NOT_AT_FOCUS, rule, f"{loc} is not the focus of its region")
    envs.nursery.difference_update([loc, *between])
    for pos in between:
        envs.sigma[pos] = INT_TYPE
    envs.sigma[loc] = owner.name
    _set_focus(envs, loc)
    return owner.name


def _write_factored(envs, schema, loc, shape, cdef, args, strict, rule) -> str:
    dt = schema.datatype(shape.datatype)
    own = [j for j, f in enumerate(cdef.fields) if not dt.is_self(f)]
    selves = [j for j, f in enumerate(cdef.fields) if dt.is_self(f)]
    _check(
        strict, shape.tag in envs.nursery, Reason.WRITE_NOT_AT_FOCUS, rule,
        f"tag location of {loc} is not projected and unwritten",
    )
    comps = {}
    for j in own:
        comp = shape.entry(cdef.name, j)
        comps[j] = comp
        f = cdef.fields[j]
        if isinstance(f, ScalarInt):
            _check(
                strict, comp in envs.nursery, Reason.WRITE_NOT_AT_FOCUS, rule,
                f"field ({cdef.name},{j}) of {loc} is not projected and unwritten",
            )
        else:
            _check(
                strict, args[j] is not None and args[j][1] == comp, Reason.WRITE_NOT_AT_FOCUS, rule,
                f"field ({cdef.name},{j}) must be written at the component {comp} of {loc}",
            )
    if selves:
        if strict:
            _check_first_self(envs, schema, shape, cdef, args[selves[0]][1], comps, rule)
        for prev, nxt in zip(selves, selves[1:]):
            _check(
                strict, envs.constraints.get(args[nxt][1]) == After(dt.name, args[prev][1]),
                Reason.WRITE_NOT_AT_FOCUS, rule, f"{args[nxt][1]} must be after({dt.name}@{args[prev][1]})",
            )
    else:
        parts = [shape.tag, *comps.values()]
        _check(strict, at_focus(envs, loc, parts), Reason.WRITE_NOT_AT_FOCUS, rule, f"{loc} is not at the focus")
    envs.nursery.difference_update([loc, shape.tag, *(c for c in comps.values() if c is not None)])
    for j, comp in comps.items():
        if comp is not None and isinstance(cdef.fields[j], ScalarInt):
            envs.sigma[comp] = INT_TYPE
    envs.sigma[loc] = dt.name
    _set_focus(envs, loc)
    return dt.name


def _check_first_self(envs, schema, shape, cdef, first, comps, rule) -> None:
    intro = envs.constraints.get(first)
    if not isinstance(intro, Intro):
        raise Violation(Reason.WRITE_NOT_AT_FOCUS, rule, f"{first} is not an introduced location vector")
    if envs.constraints.get(intro.tag) != Bump(shape.tag):
        raise Violation(Reason.WRITE_NOT_AT_FOCUS, rule, f"tag of {first} must be the tag of the destination + 1")
    flds = {(k, j): comp for k, j, comp in intro.entries}
    for k, j, original in shape.entries:
        got = flds.get((k, j))
        if k == cdef.name and j in comps:
            f = cdef.fields[j]
            want = Bump(original) if isinstance(f, ScalarInt) else After(f.datatype, original)
            ok = got is not None and envs.constraints.get(got) == want
        else:
            ok = got == original
        if not ok:
            raise Violation(
                Reason.WRITE_NOT_AT_FOCUS, rule, f"component ({k},{j}) of {first} does not continue the destination's",
            )


def bind_pattern(
    envs: StaticEnvs, schema: AdtSchema, scrutinee: str, ctor: str, names: list[str]
) -> list[str]:
    """
    Bind the field locations of a matched ``ctor`` value at ``scrutinee``.

    :param names: One fresh id per field, used where the field needs a new location
    :return: The location of each field; factored scalar and nested fields are the scrutinee's own components
    """
    dt = schema.owner(ctor)
    cdef = dt.constructor(ctor)
    shape = envs.shapes[scrutinee]
    out: list[str] = []
    if isinstance(shape, Single):
        # scalars sit right after the tag, packed fields follow in order
        prev, last_packed = scrutinee, None
        scalars = [j for j, f in enumerate(cdef.fields) if isinstance(f, ScalarInt)]
        packed = [j for j, f in enumerate(cdef.fields) if isinstance(f, Packed)]
        for j in scalars + packed:
            f, name = cdef.fields[j], names[j]
            envs.shapes[name] = Single(shape.region)
            if last_packed is None:
                envs.constraints[name] = Bump(prev)
            else:
                envs.constraints[name] = After(last_packed[0], last_packed[1])
            envs.sigma[name] = INT_TYPE if isinstance(f, ScalarInt) else f.datatype
            if isinstance(f, Packed):
                last_packed = (f.datatype, name)
            prev = name
        return [names[j] for j in range(len(cdef.fields))]
    previous_self = None
    for j, f in enumerate(cdef.fields):
        if not dt.is_self(f):
            comp = shape.entry(ctor, j)
            envs.sigma[comp] = INT_TYPE if isinstance(f, ScalarInt) else f.datatype
            out.append(comp)
            continue
        name = names[j]
        if previous_self is None:
            tag = f"{name}.tag"
            envs.shapes[tag] = Single(envs.shapes[shape.tag].region)
            envs.constraints[tag] = Bump(shape.tag)
            entries = []
            for k, i, original in shape.entries:
                if k == ctor:
                    fresh = f"{name}.{k}.{i}"
                    clone_shape(envs, original, fresh)
                    kf = cdef.fields[i]
                    envs.constraints[fresh] = Bump(original) if isinstance(kf, ScalarInt) else After(kf.datatype, original)
                    entries.append((k, i, fresh))
                else:
                    entries.append((k, i, original))
            envs.shapes[name] = Factored(dt.name, tag, tuple(entries))
            envs.constraints[name] = Intro(tag, tuple(entries))
        else:
            clone_shape(envs, previous_self, name)
            envs.constraints[name] = After(dt.name, previous_self)
        envs.sigma[name] = dt.name
        previous_self = name
        out.append(name)
    return out


def finish_output(envs: StaticEnvs, schema: AdtSchema, loc: str, datatype: str, strict: bool) -> None:
    """A call wrote a ``datatype`` value at ``loc``"""
    rule = "T-App"
    shape = envs.shapes.get(loc)
    if shape is None:
        raise Violation(Reason.WRITE_NOT_AT_FOCUS, rule, f"{loc} is not a location")
    if strict:
        factored = _layout(schema, datatype) is Layout.FACTORED
        if factored != isinstance(shape, Factored) or (factored and shape.datatype != datatype):
            raise Violation(Reason.SHAPE_MISMATCH, rule, f"{loc} does not have the shape of a {datatype} location")
        if loc not in envs.nursery:
            raise _not_fresh(envs, loc, rule, "output location")
        if not at_focus(envs, loc):
            raise Violation(Reason.WRITE_NOT_AT_FOCUS, rule, f"output {loc} is not the focus of its regions")
    envs.nursery.discard(loc)
    envs.sigma[loc] = datatype
    _set_focus(envs, loc)
