import logging

from packedadt.errors import CorruptTag, LayoutMismatch
from packedadt.layout.plan import ShapePlan, compile_plan
from packedadt.layout.root import CursorBundle, SerializedRoot
from packedadt.layout.values import Value
from packedadt.regions.address import Address, ReservedTag
from packedadt.regions.runtime import RegionStore
from packedadt.schema.adt import AdtSchema

logger = logging.getLogger(__name__)


def read_value(store: RegionStore, plan: ShapePlan, cursors: list[Address]) -> tuple[Value, bool]:
    """
    Decode one value of ``plan`` starting at ``cursors``.

    ``cursors`` is advanced in place to the end of the value in every buffer of
    the plan. Returns the value and whether a random-access record was seen.
    """
    saw_ra = False
    built: list = []
    # ("node", plan) | ("build", ctor plan, scalars) | ("restore", plan, cursors after the records)
    stack: list[tuple] = [("node", plan)]
    while stack:
        item = stack.pop()
        kind = item[0]
        if kind == "build":
            _, cp, scalars = item
            n = len(cp.packed)
            kids = iter(built[len(built) - n:]) if n else iter(())
            if n:
                del built[len(built) - n:]
            args = tuple(scalars[j] if j in scalars else next(kids) for j in range(len(cp.fields)))
            built.append(Value(cp.name, args))
            continue
        if kind == "restore":
            _, p, after = item
            for b, addr in zip(p.buffers, after):
                cursors[b] = addr
            continue
        p = item[1]
        tag, at = store.tag_at(cursors[p.base])
        if tag == ReservedTag.INDIR:
            after = []
            for b in p.buffers:
                target, past = store.load_record(cursors[b], ReservedTag.INDIR)
                after.append(past)
                cursors[b] = target
            stack.append(("restore", p, after))
            stack.append(("node", p))
            continue
        if tag == ReservedTag.RANDOM_ACCESS:
            if p.ra_width == 0:
                raise CorruptTag(f"random-access record at {at} but {p.datatype} has no random-access slots")
            saw_ra = True
            tag, at = store.tag_at(at.advance(p.ra_record_width))
        if tag >= len(p.ctors):
            raise CorruptTag(f"byte {tag} at {at} is not a tag of {p.datatype}")
        cp = p.ctors[tag]
        cursors[p.base] = at.advance(1)
        scalars = {}
        for j in cp.scalars:
            b = cp.fields[j].buffer
            scalars[j], cursors[b] = store.load_int(cursors[b])
        stack.append(("build", cp, scalars))
        for j in reversed(cp.packed):
            stack.append(("node", cp.fields[j].child))
    return built[0], saw_ra


def deserialize_at(
    schema: AdtSchema, datatype: str, store: RegionStore, bundle: CursorBundle
) -> tuple[Value, CursorBundle]:
    """Decode the value of ``datatype`` at ``bundle``; also returns the end bundle"""
    plan = compile_plan(schema, datatype)
    if len(bundle) != plan.buffer_count:
        raise LayoutMismatch(f"{datatype} needs {plan.buffer_count} cursors, the bundle has {len(bundle)}")
    cursors = list(bundle.cursors)
    value, _ = read_value(store, plan, cursors)
    return value, CursorBundle(cursors)


def deserialize(root: SerializedRoot) -> Value:
    """Rebuild the in-memory value of ``root``, following redirections and indirections"""
    value, _ = deserialize_at(root.schema, root.datatype, root.store, root.bundle)
    return value


def has_random_access(root: SerializedRoot) -> bool:
    plan = compile_plan(root.schema, root.datatype)
    _, saw_ra = read_value(root.store, plan, list(root.bundle.cursors))
    return saw_ra


def adopt_buffers(schema: AdtSchema, datatype: str, store: RegionStore, regions: list[int]) -> SerializedRoot:
    """Wrap already written regions, one per buffer, as a root starting at offset 0"""
    plan = compile_plan(schema, datatype)
    if len(regions) != plan.buffer_count:
        raise LayoutMismatch(f"{datatype} needs {plan.buffer_count} buffers, got {len(regions)}")
    bundle = CursorBundle(Address(r, 0, 0) for r in regions)
    root = SerializedRoot(schema, datatype, plan.shape, bundle, list(regions), store)
    root.random_access = has_random_access(root) if plan.ra_width else False
    return root
