import logging
from dataclasses import replace

from packedadt.config import Features
from packedadt.errors import DanglingPatch, FeatureDisabled, IntegerOutOfRange, LayoutMismatch, SchemaMismatch
from packedadt.layout.plan import CtorPlan, ShapePlan, compile_plan
from packedadt.layout.root import CursorBundle, SerializedRoot
from packedadt.layout.values import INT64_MAX, INT64_MIN, Value
from packedadt.regions.address import ADDRESS_WIDTH, RECORD_WIDTH, Address, ReservedTag
from packedadt.regions.runtime import RegionStore
from packedadt.schema.adt import AdtSchema

logger = logging.getLogger(__name__)


class RandomAccessPatch:
    """Handle on the address slots of one random-access record, filled as field starts become known"""
    __slots__ = ["store", "slots_at", "groups", "pending"]

    def __init__(self, store: RegionStore, slots_at: Address, groups: dict[int, tuple[int, int]]):
        self.store = store
        self.slots_at = slots_at
        self.groups = groups
        self.pending = set(groups)

    def fill(self, field_index: int, starts: list[Address]) -> None:
        first, count = self.groups[field_index]
        if len(starts) != count:
            raise LayoutMismatch(f"field {field_index} needs {count} start addresses, got {len(starts)}")
        for k, addr in enumerate(starts):
            self.store.write(self.slots_at.advance(ADDRESS_WIDTH * (first + k)), addr.encode())
        self.pending.discard(field_index)

    def finish(self) -> None:
        if self.pending:
            raise DanglingPatch(f"random-access slots for fields {sorted(self.pending)} at {self.slots_at} were never filled")


def _ra_record(store: RegionStore, plan: ShapePlan, cp: CtorPlan, at: Address) -> tuple[RandomAccessPatch, Address]:
    groups = {j: (first, cp.fields[j].child.buffer_count) for j, first in cp.ra_slots.items()}
    start, end = store.allocate(at, plan.ra_record_width)
    store.write(start, bytes([ReservedTag.RANDOM_ACCESS]))
    used = sum(count for _, count in groups.values())
    if used < plan.ra_width:
        store.write(start.advance(1 + ADDRESS_WIDTH * used), bytes(ADDRESS_WIDTH * (plan.ra_width - used)))
    return RandomAccessPatch(store, start.advance(1), groups), end


def _indirect(store: RegionStore, plan: ShapePlan, cursors: list[Address], src: SerializedRoot) -> None:
    if src.datatype != plan.datatype or src.layout is not plan.layout or src.shape.buffer_count != plan.buffer_count:
        raise LayoutMismatch(
            f"cannot point a {plan.layout.name.lower()} {plan.datatype} slot at a "
            f"{src.layout.name.lower()} {src.datatype} value"
        )
    for k, b in enumerate(plan.buffers):
        end = store.append(cursors[b], bytes([ReservedTag.INDIR]) + src.bundle.cursors[k].encode())
        record = end.advance(-RECORD_WIDTH)
        for region_id in src.regions:
            store.record_outlink(record, region_id)
        cursors[b] = end


def write_indirection(
    schema: AdtSchema, datatype: str, dst: CursorBundle, src: SerializedRoot, features: Features | None = None
) -> None:
    """
    Write an indirection to ``src`` at the write bundle ``dst``, in every buffer.

    Parameters
    ----------
    schema : AdtSchema
        Schema of both values.
    datatype : str
        Datatype expected at ``dst``.
    dst : CursorBundle
        Frontier of each buffer; advanced in place past the records.
    src : SerializedRoot
        Fully written value of the same datatype and layout, in the same store.
    features : Features, optional
        Raises FeatureDisabled when indirection is switched off.
    """
    if features is not None and not features.indirection:
        raise FeatureDisabled("indirection records are disabled")
    plan = compile_plan(schema, datatype)
    if len(dst) != plan.buffer_count:
        raise LayoutMismatch(f"{datatype} needs {plan.buffer_count} cursors, the bundle has {len(dst)}")
    _indirect(src.store, plan, dst.cursors, src)


def write_random_access(
    schema: AdtSchema,
    datatype: str,
    ctor: str,
    dst: CursorBundle,
    store: RegionStore,
    features: Features | None = None,
) -> RandomAccessPatch:
    """Write a random-access record for ``ctor`` at the tag stream of ``dst`` and return its patch handle"""
    if features is not None and not features.random_access:
        raise FeatureDisabled("random-access records are disabled")
    plan = compile_plan(schema, datatype)
    cp = plan.by_name.get(ctor)
    if cp is None:
        raise SchemaMismatch(f"{ctor!r} is not a constructor of {datatype}")
    if not cp.has_ra_record:
        raise LayoutMismatch(f"{ctor} has fewer than two packed fields, it gets no random-access record")
    patch, dst.cursors[plan.base] = _ra_record(store, plan, cp, dst.cursors[plan.base])
    return patch


class _Writer:
    __slots__ = ["store", "random_access", "shared", "patches", "indirections"]

    def __init__(self, store: RegionStore, random_access: bool, shared: dict[int, SerializedRoot]):
        self.store = store
        self.random_access = random_access
        self.shared = shared
        self.patches: list[RandomAccessPatch] = []
        self.indirections = 0

    def run(self, plan: ShapePlan, value: Value, cursors: list[Address]) -> None:
        store = self.store
        # ("node", plan, value, is_root) or ("patch", handle, field index, buffers)
        stack: list[tuple] = [("node", plan, value, True)]
        while stack:
            item = stack.pop()
            if item[0] == "patch":
                _, patch, j, span = item
                patch.fill(j, [cursors[b] for b in span])
                continue
            _, p, v, is_root = item
            if not is_root and self.shared and id(v) in self.shared:
                _indirect(store, p, cursors, self.shared[id(v)])
                self.indirections += 1
                continue
            if not isinstance(v, Value):
                raise SchemaMismatch(f"expected a {p.datatype} value, got {v!r:.80}")
            cp = p.by_name.get(v.constructor)
            if cp is None:
                raise SchemaMismatch(f"{v.constructor!r} is not a constructor of {p.datatype}")
            if len(v.args) != len(cp.fields):
                raise SchemaMismatch(f"{cp.name} takes {len(cp.fields)} arguments, got {len(v.args)}")
            patch = None
            if self.random_access and cp.has_ra_record:
                patch, cursors[p.base] = _ra_record(store, p, cp, cursors[p.base])
                self.patches.append(patch)
            cursors[p.base] = store.append(cursors[p.base], bytes([cp.tag]))
            for j in cp.scalars:
                n = v.args[j]
                if isinstance(n, bool) or not isinstance(n, int):
                    raise SchemaMismatch(f"{cp.name} field {j} expects an Int, got {n!r:.80}")
                if not INT64_MIN <= n <= INT64_MAX:
                    raise IntegerOutOfRange(f"{n} does not fit in a signed 64-bit field")
                b = cp.fields[j].buffer
                cursors[b] = store.append_int(cursors[b], n)
            for j in reversed(cp.packed):
                fp = cp.fields[j]
                stack.append(("node", fp.child, v.args[j], False))
                if patch is not None and j in cp.ra_slots:
                    stack.append(("patch", patch, j, fp.child.buffers))
        for patch in self.patches:
            patch.finish()


def serialize(
    schema: AdtSchema,
    datatype: str,
    value: Value,
    store: RegionStore,
    *,
    random_access: bool | None = None,
    shared: dict[int, SerializedRoot] | None = None,
    chunk_sizes: list[int] | None = None,
    features: Features | None = None,
) -> SerializedRoot:
    """
    Serialize ``value`` in preorder into fresh regions of ``store``, one per buffer.

    Parameters
    ----------
    schema : AdtSchema
        Schema with the layout annotations to use.
    datatype : str
        Datatype of ``value``.
    value : Value
        Value to write.
    store : RegionStore
        Store receiving the regions.
    random_access : bool, optional
        Emit random-access records; defaults to the feature setting.
    shared : dict, optional
        ``id(subvalue)`` to an already serialized root; such subvalues are written
        as indirections instead of copies.
    chunk_sizes : list of int, optional
        First chunk size per buffer.
    features : Features, optional
        Feature switches, PACKEDADT_* variables when omitted.

    Returns
    -------
    SerializedRoot

    Examples
    --------
    >>> tree = parse_schema("data Tree = Node Tree Tree | Leaf Int")
    >>> root = serialize(tree, "Tree", Value("Node", (Value("Leaf", (1,)), Value("Leaf", (2,)))), RegionStore())
    >>> root.store.compact(root.regions[0]).hex()
    '00010100000000000000010200000000000000'
    """
    if features is None:
        features = Features.from_env()
        if random_access:
            features = replace(features, random_access=True)
    if random_access is None:
        random_access = features.random_access
    if random_access and not features.random_access:
        raise FeatureDisabled("random-access records are disabled")
    if shared and not features.indirection:
        raise FeatureDisabled("indirection records are disabled")
    plan = compile_plan(schema, datatype)
    if chunk_sizes is not None and len(chunk_sizes) != plan.buffer_count:
        raise LayoutMismatch(f"{datatype} has {plan.buffer_count} buffers, got {len(chunk_sizes)} chunk sizes")
    regions = [
        store.new_region(chunk_sizes[k] if chunk_sizes is not None else None) for k in range(plan.buffer_count)
    ]
    cursors = [store.frontier(r) for r in regions]
    start = CursorBundle.make(*cursors)
    writer = _Writer(store, random_access, shared or {})
    writer.run(plan, value, cursors)
    logger.debug(
        "serialized %s (%s) into regions %s with %d indirections",
        datatype, plan.layout.name.lower(), regions, writer.indirections,
    )
    return SerializedRoot(schema, datatype, plan.shape, start, regions, store, random_access, writer.indirections)


def serialize_shared(
    schema: AdtSchema,
    datatype: str,
    value: Value,
    store: RegionStore,
    *,
    random_access: bool | None = None,
    min_nodes: int = 2,
    features: Features | None = None,
) -> SerializedRoot:
    """
    Serialize ``value`` writing each structurally repeated subvalue of at least
    ``min_nodes`` nodes once and referring to every occurrence by indirection.
    """
    plan = compile_plan(schema, datatype)
    keys: dict[tuple, int] = {}
    node_key: dict[int, int] = {}
    sizes: dict[int, int] = {}
    counts: dict[int, int] = {}
    # post-order hash-consing, ("enter"|"exit", value)
    stack: list[tuple[bool, Value]] = [(False, value)]
    while stack:
        done, v = stack.pop()
        if not isinstance(v, Value):
            raise SchemaMismatch(f"expected a value, got {v!r:.80}")
        if not done:
            stack.append((True, v))
            stack.extend((False, a) for a in reversed(v.args) if isinstance(a, Value))
            continue
        parts = tuple(("v", node_key[id(a)]) if isinstance(a, Value) else ("i", a) for a in v.args)
        key = keys.setdefault((v.constructor, parts), len(keys))
        node_key[id(v)] = key
        counts[key] = counts.get(key, 0) + 1
        sizes[key] = 1 + sum(sizes[node_key[id(a)]] for a in v.args if isinstance(a, Value))

    roots: dict[int, SerializedRoot] = {}
    shared: dict[int, SerializedRoot] = {}
    walk: list[tuple[ShapePlan, Value, bool]] = [(plan, value, True)]
    while walk:
        p, v, is_root = walk.pop()
        key = node_key[id(v)]
        if not is_root and counts[key] > 1 and sizes[key] >= min_nodes:
            if key not in roots:
                roots[key] = serialize(schema, p.datatype, v, store, random_access=random_access, features=features)
            shared[id(v)] = roots[key]
            continue
        cp = p.by_name.get(v.constructor)
        if cp is None:
            raise SchemaMismatch(f"{v.constructor!r} is not a constructor of {p.datatype}")
        for j in cp.packed:
            if j < len(v.args):
                walk.append((cp.fields[j].child, v.args[j], False))
    root = serialize(schema, datatype, value, store, random_access=random_access, shared=shared, features=features)
    # the main value's outlinks now keep the shared regions alive
    for shared_root in roots.values():
        shared_root.drop()
    logger.info("shared %d repeated subvalues through %d indirections", len(roots), root.indirections)
    return root
