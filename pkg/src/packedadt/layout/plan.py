from dataclasses import dataclass, field
from enum import Enum

from packedadt.schema.adt import AdtSchema, Layout, Packed, ScalarInt
from packedadt.schema.shape import BufferShape, buffer_shape


class Slot(Enum):
    SCALAR = "scalar"
    PACKED = "packed"
    SELF = "self"


@dataclass(slots=True)
class FieldPlan:
    kind: Slot
    buffer: int
    child: "ShapePlan | None" = None

    def span(self) -> range:
        """Buffers a value of this field occupies"""
        if self.child is None:
            return range(self.buffer, self.buffer + 1)
        return self.child.buffers


@dataclass(slots=True)
class CtorPlan:
    name: str
    tag: int
    fields: list[FieldPlan] = field(default_factory=list)
    # field index -> first slot of its random-access group
    ra_slots: dict[int, int] = field(default_factory=dict)

    @property
    def scalars(self) -> list[int]:
        return [j for j, f in enumerate(self.fields) if f.kind is Slot.SCALAR]

    @property
    def packed(self) -> list[int]:
        return [j for j, f in enumerate(self.fields) if f.kind is not Slot.SCALAR]

    @property
    def has_ra_record(self) -> bool:
        return bool(self.ra_slots)


@dataclass(slots=True)
class ShapePlan:
    """Compiled read/write recipe for one datatype placed at one base buffer"""
    datatype: str
    layout: Layout
    base: int
    shape: BufferShape
    ctors: list[CtorPlan] = field(default_factory=list)
    by_name: dict[str, CtorPlan] = field(default_factory=dict)
    ra_width: int = 0

    @property
    def buffer_count(self) -> int:
        return self.shape.buffer_count

    @property
    def buffers(self) -> range:
        return range(self.base, self.base + self.shape.buffer_count)

    @property
    def ra_record_width(self) -> int:
        """Bytes of a random-access record before the constructor tag"""
        return 1 + 8 * self.ra_width


def compile_plan(schema: AdtSchema, datatype: str, base: int = 0) -> ShapePlan:
    """
    Build the plan for ``datatype`` with its tag stream in buffer ``base``.

    Plans are memoised per (datatype, base) so flat datatypes that mention each
    other share plan objects instead of recursing forever.
    """
    cache: dict[tuple[str, int], ShapePlan] = {}
    root = _plan(schema, datatype, base, cache)
    return root


def _plan(schema: AdtSchema, datatype: str, base: int, cache: dict) -> ShapePlan:
    key = (datatype, base)
    if key in cache:
        return cache[key]
    dt = schema.datatype(datatype)
    shape = buffer_shape(schema, datatype, base)
    plan = ShapePlan(datatype, dt.layout, base, shape)
    cache[key] = plan
    for ctor in dt.constructors:
        cp = CtorPlan(ctor.name, ctor.tag)
        for j, f in enumerate(ctor.fields):
            if isinstance(f, ScalarInt):
                buffer = base if dt.layout is Layout.FLAT else shape.entry(ctor.name, j).buffer
                cp.fields.append(FieldPlan(Slot.SCALAR, buffer))
            elif isinstance(f, Packed) and dt.is_self(f):
                cp.fields.append(FieldPlan(Slot.SELF, base, plan))
            else:
                child_base = base if dt.layout is Layout.FLAT else shape.entry(ctor.name, j).buffer
                cp.fields.append(FieldPlan(Slot.PACKED, child_base, _plan(schema, f.datatype, child_base, cache)))
        plan.ctors.append(cp)
        plan.by_name[cp.name] = cp
    _assign_ra_slots(plan)
    return plan


def _assign_ra_slots(plan: ShapePlan) -> None:
    # only constructors with at least two packed fields get a record; the slots
    # point at the start of every packed field after the first
    width = 0
    for cp in plan.ctors:
        packed = cp.packed
        if len(packed) < 2:
            continue
        used = 0
        for j in packed[1:]:
            cp.ra_slots[j] = used
            used += _ra_span(plan, cp.fields[j])
        width = max(width, used)
    plan.ra_width = width


def _ra_span(plan: ShapePlan, fp: FieldPlan) -> int:
    if plan.layout is Layout.FLAT:
        return 1
    return fp.child.buffer_count
