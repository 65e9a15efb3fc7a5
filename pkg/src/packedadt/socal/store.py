import struct
from dataclasses import dataclass, field
from typing import NamedTuple

from packedadt.errors import IllFormedStore
from packedadt.layout.values import Value
from packedadt.schema.adt import AdtSchema, Layout, ScalarInt

INT_CELL = struct.Struct("<q")

# a cell holds a constructor name or an integer
Cell = str | int


class CLoc(NamedTuple):
    """Concrete location: a cell index in a region"""
    region: str
    index: int

    def __str__(self) -> str:
        return f"{self.region}[{self.index}]"

    def bumped(self, n: int = 1) -> "CLoc":
        return CLoc(self.region, self.index + n)


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class CFact:
    """Concrete root of a factored value: the tag cursor and one cursor per field component"""
    tag: "Concrete"
    entries: tuple[tuple[str, int, "Concrete"], ...]

    def entry(self, ctor: str, index: int) -> "Concrete | None":
        for k, j, c in self.entries:
            if k == ctor and j == index:
                return c
        return None

    def __str__(self) -> str:
        inner = ", ".join(f"({k},{j}) -> {c}" for k, j, c in self.entries)
        return f"<{self.tag}; {inner}>"


Concrete = CLoc | CFact


def concrete_leaves(root: Concrete) -> list[CLoc]:
    out = []
    pending = [root]
    while pending:
        cur = pending.pop()
        if isinstance(cur, CLoc):
            out.append(cur)
        else:
            pending.append(cur.tag)
            pending.extend(c for _, _, c in cur.entries)
    return out


@dataclass(slots=True)
class RuntimeState:
    """The store S (region -> index -> cell) and the location map M"""
    schema: AdtSchema
    store: dict[str, dict[int, Cell]] = field(default_factory=dict)
    locmap: dict[str, Concrete] = field(default_factory=dict)
    writes: dict[tuple[str, int], int] = field(default_factory=dict)
    overwritten: list[CLoc] = field(default_factory=list)
    ew_cache: dict = field(default_factory=dict)

    def new_region(self, region: str) -> None:
        self.store[region] = {}

    def cell(self, at: CLoc) -> Cell | None:
        return self.store.get(at.region, {}).get(at.index)

    def written(self, at: CLoc) -> bool:
        return at.index in self.store.get(at.region, {})

    def write_cell(self, at: CLoc, cell: Cell) -> None:
        """Store ``cell``; a second write to the same cell is recorded and invalidates cached end witnesses"""
        key = (at.region, at.index)
        count = self.writes.get(key, 0) + 1
        self.writes[key] = count
        if count > 1:
            self.overwritten.append(at)
            self.ew_cache.clear()
        self.store.setdefault(at.region, {})[at.index] = cell

    def highest_written(self, region: str) -> int:
        cells = self.store.get(region, {})
        return max(cells) if cells else -1

    def region_cells(self, region: str) -> list[Cell]:
        """Cells 0..highest in order; a gap means the region is not contiguous"""
        cells = self.store.get(region, {})
        out = []
        for i in range(self.highest_written(region) + 1):
            if i not in cells:
                raise IllFormedStore(f"region {region} has no cell at {i}")
            out.append(cells[i])
        return out


def _int_at(state: RuntimeState, at: CLoc) -> int:
    cell = state.cell(at)
    if not isinstance(cell, int):
        raise IllFormedStore(f"expected an integer at {at}, found {cell!r}")
    return cell


def _tag_at(state: RuntimeState, at: CLoc, datatype: str) -> str:
    cell = state.cell(at)
    dt = state.schema.datatype(datatype)
    if not isinstance(cell, str) or cell not in (c.name for c in dt.constructors):
        raise IllFormedStore(f"expected a {datatype} tag at {at}, found {cell!r}")
    return cell


def end_witness(state: RuntimeState, datatype: str, root: Concrete) -> Concrete:
    """
    The concrete location just past the ``datatype`` value at ``root``.

    ``Int`` advances one cell. A flat constructor chains its fields from the
    cell after the tag. A factored value advances every component from its
    own start, constructor by constructor in preorder of the tag stream.

    :raises IllFormedStore: A cell on the way is missing or has the wrong kind
    """
    key = (datatype, root)
    if key in state.ew_cache:
        return state.ew_cache[key]
    if datatype == "Int":
        if not isinstance(root, CLoc):
            raise IllFormedStore(f"an integer lives in one cell, not at {root}")
        _int_at(state, root)
        result = root.bumped()
    elif state.schema.datatype(datatype).layout is Layout.FLAT:
        result = _ew_flat(state, datatype, root)
    else:
        result = _ew_factored(state, datatype, root)
    state.ew_cache[key] = result
    return result


def _ew_flat(state: RuntimeState, datatype: str, root: Concrete) -> CLoc:
    if not isinstance(root, CLoc):
        raise IllFormedStore(f"flat {datatype} needs a single location, got {root}")
    at = root
    pending = [datatype]
    while pending:
        name = pending.pop()
        ctor = state.schema.datatype(name).constructor(_tag_at(state, at, name))
        at = at.bumped()
        packed = []
        for f in ctor.fields:
            if isinstance(f, ScalarInt):
                _int_at(state, at)
                at = at.bumped()
            else:
                packed.append(f.datatype)
        pending.extend(reversed(packed))
    return at


def _ew_factored(state: RuntimeState, datatype: str, root: Concrete) -> CFact:
    if not isinstance(root, CFact) or not isinstance(root.tag, CLoc):
        raise IllFormedStore(f"factored {datatype} needs a factored location, got {root}")
    dt = state.schema.datatype(datatype)
    pos = {(k, j): c for k, j, c in root.entries}
    tag = root.tag
    pending = 1
    while pending:
        ctor = dt.constructor(_tag_at(state, tag, datatype))
        tag = tag.bumped()
        pending -= 1
        for j, f in enumerate(ctor.fields):
            if dt.is_self(f):
                pending += 1
                continue
            if (ctor.name, j) not in pos:
                raise IllFormedStore(f"factored root of {datatype} has no component ({ctor.name},{j})")
            field_type = "Int" if isinstance(f, ScalarInt) else f.datatype
            pos[(ctor.name, j)] = end_witness(state, field_type, pos[(ctor.name, j)])
    return CFact(tag, tuple((k, j, pos[(k, j)]) for k, j, _ in root.entries))


def read_value(state: RuntimeState, datatype: str, root: Concrete) -> Value:
    """Decode the ``datatype`` value at ``root`` from the cells"""
    dt = state.schema.datatype(datatype)
    if dt.layout is Layout.FLAT:
        if not isinstance(root, CLoc):
            raise IllFormedStore(f"flat {datatype} needs a single location, got {root}")
        return _read_flat(state, datatype, root)
    return _read_factored(state, datatype, root)


def _read_flat(state: RuntimeState, datatype: str, root: CLoc) -> Value:
    at = root
    out: list[Value] = []
    stack: list[tuple] = [("node", datatype)]
    while stack:
        frame = stack.pop()
        if frame[0] == "build":
            _, name, scalars, count = frame
            children = out[len(out) - count:] if count else []
            del out[len(out) - count:]
            out.append(Value(name, tuple(scalars) + tuple(children)))
            continue
        ctor = state.schema.datatype(frame[1]).constructor(_tag_at(state, at, frame[1]))
        at = at.bumped()
        scalars, packed = [], []
        for f in ctor.fields:
            if isinstance(f, ScalarInt):
                scalars.append(_int_at(state, at))
                at = at.bumped()
            else:
                packed.append(f.datatype)
        stack.append(("build", ctor.name, scalars, len(packed)))
        stack.extend(("node", p) for p in reversed(packed))
    return out[0]


def _read_factored(state: RuntimeState, datatype: str, root: Concrete) -> Value:
    if not isinstance(root, CFact) or not isinstance(root.tag, CLoc):
        raise IllFormedStore(f"factored {datatype} needs a factored location, got {root}")
    dt = state.schema.datatype(datatype)
    pos = {(k, j): c for k, j, c in root.entries}
    tag = root.tag
    out: list[Value] = []
    stack: list[tuple] = [("node",)]
    while stack:
        frame = stack.pop()
        if frame[0] == "build":
            _, name, own, count = frame
            children = out[len(out) - count:] if count else []
            del out[len(out) - count:]
            out.append(Value(name, tuple(own) + tuple(children)))
            continue
        ctor = dt.constructor(_tag_at(state, tag, datatype))
        tag = tag.bumped()
        own, selves = [], 0
        for j, f in enumerate(ctor.fields):
            if dt.is_self(f):
                selves += 1
                continue
            at = pos.get((ctor.name, j))
            if at is None:
                raise IllFormedStore(f"factored root of {datatype} has no component ({ctor.name},{j})")
            if isinstance(f, ScalarInt):
                if not isinstance(at, CLoc):
                    raise IllFormedStore(f"component ({ctor.name},{j}) of an Int is not a single location")
                own.append(_int_at(state, at))
                pos[(ctor.name, j)] = at.bumped()
            else:
                own.append(read_value(state, f.datatype, at))
                pos[(ctor.name, j)] = end_witness(state, f.datatype, at)
        stack.append(("build", ctor.name, own, selves))
        stack.extend([("node",)] * selves)
    return out[0]


def region_bytes(state: RuntimeState, region: str) -> bytes:
    """Cells of ``region`` as layout bytes: a tag is one byte, an integer eight"""
    parts = []
    for cell in state.region_cells(region):
        if isinstance(cell, str):
            parts.append(bytes([state.schema.constructor(cell).tag]))
        else:
            parts.append(INT_CELL.pack(cell))
    return b"".join(parts)


def cell_width(cell: Cell) -> int:
    return 1 if isinstance(cell, str) else INT_CELL.size


def byte_offset(state: RuntimeState, at: CLoc) -> int:
    """Byte offset of cell ``at`` under the tag=1, integer=8 mapping"""
    cells = state.store.get(at.region, {})
    return sum(cell_width(cells[i]) for i in range(at.index) if i in cells)
