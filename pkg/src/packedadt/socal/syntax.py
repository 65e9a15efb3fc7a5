from dataclasses import dataclass, field

from packedadt.schema.adt import AdtSchema

# source position (line, column), never part of equality
Pos = tuple[int, int] | None


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class IntType:
    def __str__(self) -> str:
        return "Int"


INT_T = IntType()


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class LocType:
    """A packed datatype located at a symbolic location"""
    datatype: str
    loc: str

    def __str__(self) -> str:
        return f"({self.datatype} {self.loc})"


Type = IntType | LocType


# location expressions

@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class StartEntry:
    ctor: str
    index: int
    target: "StartLoc"


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class StartLoc:
    """``(start r)`` or the factored ``(start r ((K j r')...) [T])``; ``entries`` is None for a single location"""
    region: str
    entries: tuple[StartEntry, ...] | None = None
    datatype: str | None = None

    @property
    def factored(self) -> bool:
        return self.entries is not None


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class PlusOne:
    loc: str


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class AfterLoc:
    datatype: str
    loc: str


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class ProjTag:
    loc: str


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class ProjField:
    ctor: str
    index: int
    loc: str


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class IntroLocVec:
    tag: str
    entries: tuple[tuple[str, int, str], ...]
    datatype: str | None = None


LocExpr = StartLoc | PlusOne | AfterLoc | ProjTag | ProjField | IntroLocVec


# expressions

@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class Var:
    name: str
    pos: Pos = field(default=None, compare=False)


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class IntLit:
    value: int
    pos: Pos = field(default=None, compare=False)


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class Let:
    var: str
    rhs: "Expr"
    body: "Expr"
    pos: Pos = field(default=None, compare=False)


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class LetRegion:
    region: str
    body: "Expr"
    pos: Pos = field(default=None, compare=False)


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class LetLoc:
    loc: str
    locexpr: LocExpr
    body: "Expr"
    pos: Pos = field(default=None, compare=False)


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class DataCon:
    """Write constructor ``ctor`` at ``loc``; arguments are variables or integer literals"""
    ctor: str
    loc: str
    args: tuple["Expr", ...] = ()
    pos: Pos = field(default=None, compare=False)


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class Binder:
    var: str
    loc: str | None = None


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class Branch:
    ctor: str
    binders: tuple[Binder, ...]
    body: "Expr"
    pos: Pos = field(default=None, compare=False)


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class Case:
    scrutinee: str
    branches: tuple[Branch, ...]
    pos: Pos = field(default=None, compare=False)


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class App:
    fn: str
    locs: tuple[str, ...]
    args: tuple["Expr", ...]
    pos: Pos = field(default=None, compare=False)


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class If:
    cond: "Expr"
    then: "Expr"
    orelse: "Expr"
    pos: Pos = field(default=None, compare=False)


PRIM_OPS = ("+", "-", "*", "<=", "<", "=")


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class Prim:
    op: str
    left: "Expr"
    right: "Expr"
    pos: Pos = field(default=None, compare=False)


Expr = Var | IntLit | Let | LetRegion | LetLoc | DataCon | Case | App | If | Prim


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class FunDef:
    name: str
    loc_params: tuple[str, ...]
    params: tuple[tuple[str, Type], ...]
    result: Type
    body: Expr
    pos: Pos = field(default=None, compare=False)


@dataclass(init=True, repr=False, eq=True, frozen=True, slots=True)
class SocalProgram:
    schema: AdtSchema
    functions: tuple[FunDef, ...] = ()
    main: Expr | None = None

    def function(self, name: str) -> FunDef | None:
        for fn in self.functions:
            if fn.name == name:
                return fn
        return None

    def __repr__(self) -> str:
        names = ", ".join(fn.name for fn in self.functions)
        return f"SocalProgram({self.schema!r}, functions=[{names}], main={self.main is not None})"


def apply_prim(op: str, a: int, b: int) -> int:
    """Integer primitives; comparisons yield 1 or 0"""
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "<=":
        return int(a <= b)
    if op == "<":
        return int(a < b)
    if op == "=":
        return int(a == b)
    raise ValueError(f"unknown primitive {op!r}")
