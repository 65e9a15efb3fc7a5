import logging
import re
from dataclasses import dataclass, field

import pyparsing as pp

from packedadt.errors import SchemaError, SocalSyntaxError, UnboundName
from packedadt.schema.adt import AdtSchema, parse_schema
from packedadt.socal.syntax import (
    INT_T,
    PRIM_OPS,
    AfterLoc,
    App,
    Binder,
    Branch,
    Case,
    DataCon,
    Expr,
    FunDef,
    If,
    IntLit,
    IntroLocVec,
    Let,
    LetLoc,
    LetRegion,
    LocExpr,
    LocType,
    PlusOne,
    Prim,
    ProjField,
    ProjTag,
    SocalProgram,
    StartEntry,
    StartLoc,
    Type,
    Var,
)

logger = logging.getLogger(__name__)

_TOKEN = (
    pp.Regex(r";[^\n]*")("comment")
    | pp.Literal("(")("open")
    | pp.Literal(")")("close")
    | pp.Regex(r"[^\s();]+")("atom")
)
_INT = re.compile(r"-?\d+$")
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_']*$")
_KEYWORDS = {"let", "letregion", "letloc", "case", "if", "data", "layout", "define", "main"}
_POSITION = re.compile(r"^\d+:\d+: ")


@dataclass(slots=True)
class SAtom:
    text: str
    line: int
    col: int


@dataclass(slots=True)
class SList:
    items: list = field(default_factory=list)
    line: int = 1
    col: int = 1


def read_sexprs(text: str) -> list[SAtom | SList]:
    """Tokenize with pyparsing and assemble s-expressions on an explicit stack"""
    top = SList()
    stack = [top]
    for tokens, start, _ in _TOKEN.scan_string(text):
        line, col = pp.lineno(start, text), pp.col(start, text)
        if "comment" in tokens:
            continue
        if "open" in tokens:
            node = SList([], line, col)
            stack[-1].items.append(node)
            stack.append(node)
        elif "close" in tokens:
            if len(stack) == 1:
                raise SocalSyntaxError("unexpected ')'", line, col)
            stack.pop()
        else:
            stack[-1].items.append(SAtom(tokens[0], line, col))
    if len(stack) > 1:
        opened = stack[-1]
        raise SocalSyntaxError("unbalanced '(' never closed", opened.line, opened.col)
    return top.items


def _fail(node, message: str):
    raise SocalSyntaxError(message, node.line, node.col)


def _atom(node, what: str) -> str:
    if not isinstance(node, SAtom):
        _fail(node, f"expected {what}, found a list")
    return node.text


def _name(node, what: str) -> str:
    text = _atom(node, what)
    if not _NAME.match(text) or text in _KEYWORDS:
        _fail(node, f"expected {what}, found {text!r}")
    return text


def _int(node, what: str) -> int:
    text = _atom(node, what)
    if not _INT.match(text):
        _fail(node, f"expected {what}, found {text!r}")
    return int(text)


def _list(node, what: str, minimum: int = 0) -> list:
    if not isinstance(node, SList):
        _fail(node, f"expected {what}, found {node.text!r}")
    if len(node.items) < minimum:
        _fail(node, f"{what} needs at least {minimum} parts")
    return node.items


@dataclass(frozen=True, slots=True)
class _Scope:
    vars: frozenset = frozenset()
    locs: frozenset = frozenset()
    regions: frozenset = frozenset()

    def with_var(self, name: str) -> "_Scope":
        return _Scope(self.vars | {name}, self.locs, self.regions)

    def with_loc(self, name: str) -> "_Scope":
        return _Scope(self.vars, self.locs | {name}, self.regions)

    def with_region(self, name: str) -> "_Scope":
        return _Scope(self.vars, self.locs, self.regions | {name})


class _Converter:
    __slots__ = ["schema", "functions", "calls"]

    def __init__(self, schema: AdtSchema):
        self.schema = schema
        self.functions: set[str] = set()
        self.calls: list[tuple[str, SList]] = []

    def loc(self, node, scope: _Scope) -> str:
        name = _name(node, "location")
        if name not in scope.locs:
            raise UnboundName(f"unbound location {name!r}", node.line, node.col)
        return name

    def region(self, node, scope: _Scope) -> str:
        name = _name(node, "region")
        if name not in scope.regions:
            raise UnboundName(f"unbound region {name!r}", node.line, node.col)
        return name

    def datatype(self, node) -> str:
        name = _name(node, "datatype")
        if name not in self.schema:
            raise UnboundName(f"unknown datatype {name!r}", node.line, node.col)
        return name

    def ctor(self, node) -> str:
        name = _name(node, "constructor")
        if not self.schema.has_constructor(name):
            raise UnboundName(f"unknown constructor {name!r}", node.line, node.col)
        return name

    def type_of(self, node, locs: frozenset) -> Type:
        if isinstance(node, SAtom):
            if node.text != "Int":
                _fail(node, f"expected Int or (T l), found {node.text!r}")
            return INT_T
        items = _list(node, "type")
        if len(items) != 2:
            _fail(node, "a located type is (T l)")
        dt = self.datatype(items[0])
        loc = _name(items[1], "location")
        if loc not in locs:
            raise UnboundName(f"unbound location {loc!r}", items[1].line, items[1].col)
        return LocType(dt, loc)

    def start(self, items: list, node, scope: _Scope) -> StartLoc:
        region = self.region(items[0], scope)
        if len(items) == 1:
            return StartLoc(region)
        if len(items) > 3:
            _fail(node, "start takes a region, an entry list and an optional datatype")
        entries = []
        for entry in _list(items[1], "start entries"):
            parts = _list(entry, "start entry")
            if len(parts) != 3:
                _fail(entry, "a start entry is (K j r)")
            target = parts[2]
            if isinstance(target, SAtom):
                nested = StartLoc(self.region(target, scope))
            else:
                nested = self.start(_list(target, "nested start", 1), target, scope)
            entries.append(StartEntry(self.ctor(parts[0]), _int(parts[1], "field index"), nested))
        datatype = self.datatype(items[2]) if len(items) == 3 else None
        return StartLoc(region, tuple(entries), datatype)

    def locexpr(self, node, scope: _Scope) -> LocExpr:
        items = _list(node, "location expression", 2)
        head = _atom(items[0], "location form")
        args = items[1:]
        if head == "start":
            return self.start(args, node, scope)
        if head == "+":
            if len(args) != 2 or _int(args[1], "1") != 1:
                _fail(node, "only (+ l 1) is a location expression")
            return PlusOne(self.loc(args[0], scope))
        if head == "after":
            if len(args) != 2:
                _fail(node, "after takes a datatype and a location")
            return AfterLoc(self.datatype(args[0]), self.loc(args[1], scope))
        if head == "projTagLoc":
            if len(args) != 1:
                _fail(node, "projTagLoc takes one location")
            return ProjTag(self.loc(args[0], scope))
        if head == "projFieldLoc":
            if len(args) != 3:
                _fail(node, "projFieldLoc takes a constructor, an index and a location")
            return ProjField(self.ctor(args[0]), _int(args[1], "field index"), self.loc(args[2], scope))
        if head == "introLocVec":
            if len(args) not in (2, 3):
                _fail(node, "introLocVec takes a tag location, an entry list and an optional datatype")
            entries = []
            for entry in _list(args[1], "introLocVec entries"):
                parts = _list(entry, "introLocVec entry")
                if len(parts) != 3:
                    _fail(entry, "an introLocVec entry is (K j l)")
                entries.append((self.ctor(parts[0]), _int(parts[1], "field index"), self.loc(parts[2], scope)))
            datatype = self.datatype(args[2]) if len(args) == 3 else None
            return IntroLocVec(self.loc(args[0], scope), tuple(entries), datatype)
        _fail(items[0], f"unknown location form {head!r}")

    def expr(self, node, scope: _Scope) -> Expr:
        pos = (node.line, node.col)
        if isinstance(node, SAtom):
            if _INT.match(node.text):
                return IntLit(int(node.text), pos)
            name = _name(node, "expression")
            if name not in scope.vars:
                raise UnboundName(f"unbound variable {name!r}", node.line, node.col)
            return Var(name, pos)
        items = _list(node, "expression", 1)
        head = items[0]
        if not isinstance(head, SAtom):
            _fail(head, "expected a form name")
        word = head.text
        if word == "let":
            if len(items) != 4:
                _fail(node, "let is (let x e body)")
            var = _name(items[1], "variable")
            return Let(var, self.expr(items[2], scope), self.expr(items[3], scope.with_var(var)), pos)
        if word == "letregion":
            if len(items) != 3:
                _fail(node, "letregion is (letregion r body)")
            region = _name(items[1], "region")
            return LetRegion(region, self.expr(items[2], scope.with_region(region)), pos)
        if word == "letloc":
            if len(items) != 4:
                _fail(node, "letloc is (letloc l locexp body)")
            loc = _name(items[1], "location")
            return LetLoc(loc, self.locexpr(items[2], scope), self.expr(items[3], scope.with_loc(loc)), pos)
        if word == "if":
            if len(items) != 4:
                _fail(node, "if is (if c then else)")
            return If(*(self.expr(x, scope) for x in items[1:]), pos)
        if word in PRIM_OPS:
            if len(items) != 3:
                _fail(node, f"{word} takes two operands")
            return Prim(word, self.expr(items[1], scope), self.expr(items[2], scope), pos)
        if word == "case":
            return self.case(items, node, scope)
        if self.schema.has_constructor(word):
            if len(items) < 2:
                _fail(node, f"constructor {word} needs a location")
            args = tuple(self.expr(a, scope) for a in items[2:])
            for arg, raw in zip(args, items[2:]):
                if not isinstance(arg, (Var, IntLit)):
                    _fail(raw, "constructor arguments are variables or integers")
            return DataCon(word, self.loc(items[1], scope), args, pos)
        if word[:1].isupper():
            raise UnboundName(f"unknown constructor {word!r}", head.line, head.col)
        name = _name(head, "function name")
        if len(items) < 2:
            _fail(node, f"call to {name} needs a location list")
        locs = tuple(self.loc(x, scope) for x in _list(items[1], "location arguments"))
        self.calls.append((name, node))
        return App(name, locs, tuple(self.expr(a, scope) for a in items[2:]), pos)

    def case(self, items: list, node, scope: _Scope) -> Case:
        if len(items) < 3:
            _fail(node, "case is (case x ((K v...) e)...)")
        scrutinee = _name(items[1], "variable")
        if scrutinee not in scope.vars:
            raise UnboundName(f"unbound variable {scrutinee!r}", items[1].line, items[1].col)
        branches = []
        for raw in items[2:]:
            parts = _list(raw, "case branch")
            if len(parts) != 2:
                _fail(raw, "a branch is ((K v...) e)")
            pattern = _list(parts[0], "pattern", 1)
            ctor = self.ctor(pattern[0])
            inner = scope
            binders = []
            for b in pattern[1:]:
                if isinstance(b, SAtom):
                    binder = Binder(_name(b, "pattern variable"))
                else:
                    pair = _list(b, "pattern binder")
                    if len(pair) != 2:
                        _fail(b, "a located binder is (v l)")
                    binder = Binder(_name(pair[0], "pattern variable"), _name(pair[1], "location"))
                    inner = inner.with_loc(binder.loc)
                inner = inner.with_var(binder.var)
                binders.append(binder)
            branches.append(Branch(ctor, tuple(binders), self.expr(parts[1], inner), (raw.line, raw.col)))
        return Case(scrutinee, tuple(branches), (node.line, node.col))

    def define(self, node) -> FunDef:
        items = node.items
        if len(items) != 5:
            _fail(node, "define is (define (f l...) ((x t)...) t body)")
        head = _list(items[1], "function head", 1)
        name = _name(head[0], "function name")
        loc_params = tuple(_name(x, "location parameter") for x in head[1:])
        locs = frozenset(loc_params)
        params = []
        scope = _Scope(locs=locs)
        for p in _list(items[2], "parameter list"):
            pair = _list(p, "parameter")
            if len(pair) != 2:
                _fail(p, "a parameter is (x t)")
            var = _name(pair[0], "parameter")
            params.append((var, self.type_of(pair[1], locs)))
            scope = scope.with_var(var)
        result = self.type_of(items[3], locs)
        return FunDef(name, loc_params, tuple(params), result, self.expr(items[4], scope), (node.line, node.col))


def _schema_from_forms(forms: list[SList], base: AdtSchema | None) -> AdtSchema:
    statements = []
    where = []
    if base is not None:
        for line in base.canonical_text().splitlines():
            statements.append(line)
            where.append(None)
    for form in forms:
        items = form.items
        kind = items[0].text
        if kind == "data":
            if len(items) < 3:
                _fail(form, "data is (data T (K f...) ...)")
            alternatives = []
            for alt in items[2:]:
                if isinstance(alt, SAtom):
                    alternatives.append(_name(alt, "constructor"))
                else:
                    parts = _list(alt, "constructor", 1)
                    alternatives.append(" ".join(_name(p, "field type") for p in parts))
            statements.append(f"data {_name(items[1], 'datatype')} = {' | '.join(alternatives)}")
        else:
            if len(items) != 3:
                _fail(form, "layout is (layout T Flat|Factored)")
            statements.append(f"layout {_name(items[1], 'datatype')} = {_name(items[2], 'layout')}")
        where.append(form)
    try:
        return parse_schema("\n".join(statements))
    except SchemaError as e:
        form = where[e.line - 1] if e.line is not None and e.line <= len(where) else None
        message = _POSITION.sub("", str(e))
        if form is None:
            raise type(e)(message) from None
        raise type(e)(message, form.line, form.col) from None


def parse_socal(text: str, schema: AdtSchema | None = None) -> SocalProgram:
    """
    Parse ``.socal`` source.

    Parameters
    ----------
    text : str
        Top-level forms ``(data ...)``, ``(layout ...)``, ``(define ...)`` and
        at most one ``(main e)``. ``;`` starts a comment.
    schema : AdtSchema, optional
        Datatypes known before the file's own ``data`` forms.

    Returns
    -------
    SocalProgram
        The program. Names are resolved; typing is left to the checker.
    """
    top = read_sexprs(text)
    decls, defines, mains = [], [], []
    for node in top:
        items = _list(node, "top-level form", 1)
        kind = _atom(items[0], "top-level form")
        if kind in ("data", "layout"):
            decls.append(node)
        elif kind == "define":
            defines.append(node)
        elif kind == "main":
            if len(items) != 2:
                _fail(node, "main is (main e)")
            mains.append(node)
        else:
            _fail(items[0], f"unknown top-level form {kind!r}")
    if len(mains) > 1:
        _fail(mains[1], "more than one main")
    if decls:
        schema = _schema_from_forms(decls, schema)
    elif schema is None:
        raise SocalSyntaxError("the program declares no datatypes", 1, 1)

    conv = _Converter(schema)
    functions = [conv.define(node) for node in defines]
    names = [fn.name for fn in functions]
    for fn, node in zip(functions, defines):
        if names.count(fn.name) > 1:
            _fail(node, f"function {fn.name!r} defined twice")
    conv.functions = set(names)
    main = conv.expr(mains[0].items[1], _Scope()) if mains else None
    for name, node in conv.calls:
        if name not in conv.functions:
            raise UnboundName(f"unknown function {name!r}", node.line, node.col)
    logger.debug("parsed socal program: %d functions, main=%s", len(functions), main is not None)
    return SocalProgram(schema, tuple(functions), main)
