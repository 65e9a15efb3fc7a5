from dataclasses import dataclass

from packedadt.errors import InfiniteShape
from packedadt.schema.adt import AdtSchema, Layout, Packed, ScalarInt


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class ShapeEntry:
    """Buffer assignment for one (constructor, field index) pair"""
    constructor: str
    field_index: int
    buffer: int
    nested: "BufferShape | None" = None

    @property
    def width(self) -> int:
        return 1 if self.nested is None else self.nested.buffer_count

    @property
    def key(self) -> tuple[str, int]:
        return self.constructor, self.field_index


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class BufferShape:
    """
    Buffers a value of ``datatype`` occupies. Buffer indices are absolute, the
    shape itself starts at ``base`` and ``base`` is always the tag stream.
    """
    datatype: str
    layout: Layout
    base: int
    buffer_count: int
    entries: tuple[ShapeEntry, ...] = ()

    def entry(self, constructor: str, field_index: int) -> ShapeEntry:
        for e in self.entries:
            if e.constructor == constructor and e.field_index == field_index:
                return e
        raise KeyError((constructor, field_index))

    def keys(self) -> list[tuple[str, int]]:
        return [e.key for e in self.entries]

    def buffers(self) -> range:
        return range(self.base, self.base + self.buffer_count)

    def roles(self) -> list[str]:
        """Human readable name of every buffer, in buffer order"""
        names = ["tags"]
        for e in self.entries:
            prefix = f"{e.constructor}.{e.field_index}"
            if e.nested is None or e.nested.layout is Layout.FLAT:
                names.append(prefix)
            else:
                names.extend(f"{prefix}/{role}" for role in e.nested.roles())
        return names


def buffer_shape(schema: AdtSchema, datatype: str, base: int = 0) -> BufferShape:
    """
    Compute the buffer shape of ``datatype``.

    Parameters
    ----------
    schema : AdtSchema
        Schema declaring the datatype.
    datatype : str
        Datatype name.
    base : int, optional
        Absolute index of the shape's tag stream, for nested shapes.

    Returns
    -------
    BufferShape
        Flat datatypes collapse to one buffer. Factored datatypes get the tag
        stream, one buffer per scalar field and a nested shape per field of another
        datatype; self-recursive fields have no entry.

    Examples
    --------
    >>> tree = parse_schema("data Tree = Node Tree Tree | Leaf Int; layout Tree = Factored")
    >>> buffer_shape(tree, "Tree").buffer_count
    2
    """
    return _shape(schema, datatype, base, ())


def _shape(schema: AdtSchema, datatype: str, base: int, visiting: tuple[str, ...]) -> BufferShape:
    dt = schema.datatype(datatype)
    if dt.layout is Layout.FLAT:
        return BufferShape(datatype, Layout.FLAT, base, 1, ())
    if datatype in visiting:
        raise InfiniteShape(f"factored cycle through {' -> '.join(visiting + (datatype,))}")
    entries = []
    next_buffer = base + 1
    for ctor in dt.constructors:
        for j, f in enumerate(ctor.fields):
            if isinstance(f, ScalarInt):
                entries.append(ShapeEntry(ctor.name, j, next_buffer))
                next_buffer += 1
            elif isinstance(f, Packed) and not dt.is_self(f):
                nested = _shape(schema, f.datatype, next_buffer, visiting + (datatype,))
                entries.append(ShapeEntry(ctor.name, j, next_buffer, nested))
                next_buffer += nested.buffer_count
    return BufferShape(datatype, Layout.FACTORED, base, next_buffer - base, tuple(entries))


def cursor_count(shape: BufferShape) -> int:
    """Number of parallel cursors a value of this shape needs (1 for flat)"""
    return 1 + sum(1 if e.nested is None else cursor_count(e.nested) for e in shape.entries)
