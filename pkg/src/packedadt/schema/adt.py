import logging
from dataclasses import dataclass, field
from enum import Enum

import pyparsing as pp

from packedadt.errors import (
    DuplicateConstructor,
    DuplicateDatatype,
    FactoredInsideFlat,
    FieldOrderViolation,
    InfiniteShape,
    SchemaSyntaxError,
    TooManyConstructors,
    UnknownDatatype,
    UnsupportedFieldType,
)

logger = logging.getLogger(__name__)

MAX_CONSTRUCTORS = 250
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

# scalar spellings people reach for that the byte layout cannot hold
_UNSUPPORTED_SCALARS = {"Float", "Double", "String", "Char", "Bool", "Word", "Integer"}


class Layout(Enum):
    FLAT = 0
    FACTORED = 1

    @classmethod
    def parse(cls, text: str) -> "Layout":
        try:
            return {"flat": cls.FLAT, "factored": cls.FACTORED}[text.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown layout {text!r}, expected flat or factored") from None

    def keyword(self) -> str:
        return "Flat" if self is Layout.FLAT else "Factored"


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class ScalarInt:
    """Signed 64-bit integer field"""

    def __str__(self) -> str:
        return "Int"


INT = ScalarInt()


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class Packed:
    """Field holding a serialized value of another (or the same) datatype"""
    datatype: str

    def __str__(self) -> str:
        return self.datatype


FieldType = ScalarInt | Packed


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class ConstructorDef:
    """Class to represent a data constructor"""
    name: str
    tag: int
    fields: tuple[FieldType, ...]

    @property
    def arity(self) -> int:
        return len(self.fields)


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class DatatypeDef:
    """Class to represent a datatype and its layout annotation"""
    name: str
    layout: Layout
    constructors: tuple[ConstructorDef, ...]

    def constructor(self, name: str) -> ConstructorDef:
        for ctor in self.constructors:
            if ctor.name == name:
                return ctor
        raise KeyError(name)

    def is_self(self, field_type: FieldType) -> bool:
        return isinstance(field_type, Packed) and field_type.datatype == self.name

    def field_rank(self, field_type: FieldType) -> int:
        if isinstance(field_type, ScalarInt):
            return 0
        return 2 if self.is_self(field_type) else 1


@dataclass(init=True, repr=False, eq=True, frozen=True, slots=True)
class AdtSchema:
    """Validated set of datatypes; the source of truth for tags and widths"""
    datatypes: tuple[DatatypeDef, ...]
    _index: dict[str, int] = field(default_factory=dict, compare=False)
    _ctors: dict[str, tuple[str, int]] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for i, dt in enumerate(self.datatypes):
            self._index[dt.name] = i
            for ctor in dt.constructors:
                self._ctors[ctor.name] = (dt.name, ctor.tag)

    def __repr__(self) -> str:
        return f"AdtSchema({', '.join(dt.name for dt in self.datatypes)})"

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def datatype(self, name: str) -> DatatypeDef:
        if name not in self._index:
            raise UnknownDatatype(f"unknown datatype {name!r}")
        return self.datatypes[self._index[name]]

    def owner(self, ctor_name: str) -> DatatypeDef:
        """The datatype declaring ``ctor_name``"""
        if ctor_name not in self._ctors:
            raise UnknownDatatype(f"unknown constructor {ctor_name!r}")
        return self.datatype(self._ctors[ctor_name][0])

    def constructor(self, ctor_name: str) -> ConstructorDef:
        return self.owner(ctor_name).constructor(ctor_name)

    def has_constructor(self, ctor_name: str) -> bool:
        return ctor_name in self._ctors

    def canonical_text(self) -> str:
        """
        Normalised schema source: one ``data`` and one ``layout`` line per datatype.

        Returns
        -------
        str
            Text that parses back to an equal schema.

        Examples
        --------
        >>> parse_schema("data List = Cons Int List | Nil").canonical_text()
        'data List = Cons Int List | Nil\\nlayout List = Flat\\n'
        """
        lines = []
        for dt in self.datatypes:
            alternatives = " | ".join(
                " ".join([ctor.name, *(str(f) for f in ctor.fields)]) for ctor in dt.constructors
            )
            lines.append(f"data {dt.name} = {alternatives}")
            lines.append(f"layout {dt.name} = {dt.layout.keyword()}")
        return "\n".join(lines) + "\n"

    def schema_hash(self) -> int:
        """FNV-1a (64 bit) over the canonical text"""
        h = FNV_OFFSET
        for byte in self.canonical_text().encode("utf-8"):
            h ^= byte
            h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
        return h

    def with_layouts(self, layouts: dict[str, Layout]) -> "AdtSchema":
        """Copy of the schema with some layout annotations replaced, revalidated"""
        decls = [
            _DataDecl(dt.name, [(c.name, [str(f) for f in c.fields]) for c in dt.constructors], None, None)
            for dt in self.datatypes
        ]
        merged = {dt.name: dt.layout for dt in self.datatypes}
        for name, layout in layouts.items():
            if name not in merged:
                raise UnknownDatatype(f"unknown datatype {name!r}")
            merged[name] = layout
        return _build(decls, {k: (v, None, None) for k, v in merged.items()})


@dataclass(slots=True)
class _DataDecl:
    name: str
    alternatives: list[tuple[str, list[str]]]
    line: int | None
    column: int | None


_IDENT = pp.Word(pp.alphas + "_", pp.alphanums + "_'")
_CTOR = pp.Group(_IDENT("name") + pp.Group(pp.ZeroOrMore(_IDENT))("fields"))
_DATA = (
    pp.Keyword("data").suppress()
    + _IDENT("name")
    + pp.Suppress("=")
    + pp.Group(_CTOR + pp.ZeroOrMore(pp.Suppress("|") + _CTOR))("ctors")
)
_LAYOUT = (
    pp.Keyword("layout").suppress()
    + _IDENT("name")
    + pp.Suppress("=")
    + (pp.Keyword("Flat") | pp.Keyword("Factored"))("layout")
)


def _statements(text: str):
    """Yield (statement, line, column) with comments removed and ';' separators split"""
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        offset = 0
        for piece in line.split(";"):
            stripped = piece.strip()
            if stripped:
                column = offset + (len(piece) - len(piece.lstrip())) + 1
                yield stripped, line_no, column
            offset += len(piece) + 1


def parse_schema(text: str) -> AdtSchema:
    """
    Parse and validate ``.adt`` schema source.

    Parameters
    ----------
    text : str
        Lines of ``data <Name> = <Ctor> <Field>* | ...`` and ``layout <Name> = Flat|Factored``.
        ``#`` starts a comment and ``;`` separates statements on one line.

    Returns
    -------
    AdtSchema
        The validated schema. Datatypes without a layout line are Flat.

    Examples
    --------
    >>> schema = parse_schema("data Tree = Node Tree Tree | Leaf Int; layout Tree = Factored")
    >>> schema.datatype("Tree").constructor("Leaf").tag
    1
    """
    decls: list[_DataDecl] = []
    layouts: dict[str, tuple[Layout, int, int]] = {}
    for statement, line, column in _statements(text):
        keyword = statement.split(None, 1)[0]
        try:
            if keyword == "data":
                parsed = _DATA.parse_string(statement, parse_all=True)
                alternatives = [(c["name"], list(c["fields"])) for c in parsed["ctors"]]
                decls.append(_DataDecl(parsed["name"], alternatives, line, column))
            elif keyword == "layout":
                parsed = _LAYOUT.parse_string(statement, parse_all=True)
                if parsed["name"] in layouts:
                    raise SchemaSyntaxError(f"layout of {parsed['name']!r} given twice", line, column)
                layouts[parsed["name"]] = (Layout.parse(parsed["layout"]), line, column)
            else:
                raise SchemaSyntaxError(f"expected 'data' or 'layout', found {keyword!r}", line, column)
        except pp.ParseException as e:
            raise SchemaSyntaxError(str(e.msg), line, column + e.col - 1) from None
    schema = _build(decls, layouts)
    logger.debug("parsed schema with %d datatypes", len(schema.datatypes))
    return schema


def _build(decls: list[_DataDecl], layouts: dict[str, tuple[Layout, int | None, int | None]]) -> AdtSchema:
    names: dict[str, _DataDecl] = {}
    for decl in decls:
        if decl.name in names:
            raise DuplicateDatatype(f"datatype {decl.name!r} declared twice", decl.line, decl.column)
        if decl.name == "Int" or decl.name in _UNSUPPORTED_SCALARS:
            raise UnsupportedFieldType(f"{decl.name!r} is reserved", decl.line, decl.column)
        names[decl.name] = decl
    for name, (_, line, column) in layouts.items():
        if name not in names:
            raise UnknownDatatype(f"layout given for unknown datatype {name!r}", line, column)

    seen_ctors: set[str] = set()
    datatypes = []
    for decl in decls:
        layout = layouts.get(decl.name, (Layout.FLAT, None, None))[0]
        if len(decl.alternatives) > MAX_CONSTRUCTORS:
            raise TooManyConstructors(
                f"{decl.name!r} has {len(decl.alternatives)} constructors, at most {MAX_CONSTRUCTORS} fit in a tag",
                decl.line, decl.column,
            )
        ctors = []
        for tag, (ctor_name, field_names) in enumerate(decl.alternatives):
            if ctor_name in seen_ctors:
                raise DuplicateConstructor(f"constructor {ctor_name!r} declared twice", decl.line, decl.column)
            seen_ctors.add(ctor_name)
            fields = tuple(_field_type(f, names, decl) for f in field_names)
            ctors.append(ConstructorDef(ctor_name, tag, fields))
        datatypes.append(DatatypeDef(decl.name, layout, tuple(ctors)))

    schema = AdtSchema(tuple(datatypes))
    for dt, decl in zip(schema.datatypes, decls):
        _check_field_order(dt, decl)
        _check_nesting(schema, dt, decl)
    _check_factored_cycles(schema, decls)
    return schema


def _field_type(name: str, names: dict[str, _DataDecl], decl: _DataDecl) -> FieldType:
    if name == "Int":
        return INT
    if name in _UNSUPPORTED_SCALARS or not name[0].isupper():
        raise UnsupportedFieldType(f"field type {name!r} is not supported, only Int and datatypes", decl.line, decl.column)
    if name not in names:
        raise UnknownDatatype(f"unknown datatype {name!r} in {decl.name!r}", decl.line, decl.column)
    return Packed(name)


def _check_field_order(dt: DatatypeDef, decl: _DataDecl) -> None:
    for ctor in dt.constructors:
        ranks = [dt.field_rank(f) for f in ctor.fields]
        for j in range(1, len(ranks)):
            if ranks[j] < ranks[j - 1]:
                raise FieldOrderViolation(
                    f"{ctor.name}: field {j} ({ctor.fields[j]}) must come before field {j - 1} "
                    f"({ctor.fields[j - 1]}); order is scalars, other datatypes, then {dt.name}",
                    decl.line, decl.column,
                )


def _check_nesting(schema: AdtSchema, dt: DatatypeDef, decl: _DataDecl) -> None:
    if dt.layout is not Layout.FLAT:
        return
    for ctor in dt.constructors:
        for f in ctor.fields:
            if isinstance(f, Packed) and schema.datatype(f.datatype).layout is Layout.FACTORED:
                raise FactoredInsideFlat(
                    f"flat {dt.name!r} cannot hold factored {f.datatype!r} in {ctor.name}",
                    decl.line, decl.column,
                )


def _check_factored_cycles(schema: AdtSchema, decls: list[_DataDecl]) -> None:
    where = {d.name: d for d in decls}
    edges: dict[str, set[str]] = {}
    for dt in schema.datatypes:
        if dt.layout is not Layout.FACTORED:
            continue
        edges[dt.name] = {
            f.datatype
            for ctor in dt.constructors
            for f in ctor.fields
            if isinstance(f, Packed) and not dt.is_self(f)
            and schema.datatype(f.datatype).layout is Layout.FACTORED
        }
    # colour-marking DFS, iterative
    state: dict[str, int] = {}
    for root in edges:
        if state.get(root):
            continue
        stack = [(root, iter(sorted(edges[root])))]
        state[root] = 1
        while stack:
            node, children = stack[-1]
            nxt = next(children, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
            elif state.get(nxt) == 1:
                decl = where.get(node)
                raise InfiniteShape(
                    f"factored datatypes {node!r} and {nxt!r} nest each other, the buffer shape is infinite",
                    decl.line if decl else None, decl.column if decl else None,
                )
            elif not state.get(nxt):
                state[nxt] = 1
                stack.append((nxt, iter(sorted(edges[nxt]))))
