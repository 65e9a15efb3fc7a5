import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from packedadt.config import Features
from packedadt.errors import DanglingPatch, FeatureDisabled, IntegerOutOfRange, LayoutMismatch, SchemaMismatch
from packedadt.layout.plan import compile_plan
from packedadt.layout.reader import deserialize, deserialize_at, has_random_access
from packedadt.layout.root import CursorBundle
from packedadt.layout.values import Value, check_value, dump_values, load_values, random_value, value_from_json
from packedadt.layout.writer import serialize, serialize_shared, write_indirection, write_random_access
from packedadt.regions.address import Address
from packedadt.regions.runtime import RegionStore
from packedadt.schema.adt import Layout, parse_schema

from conftest import KDTREE, LIST, NESTED, TREE


def leaf(n):
    return Value("Leaf", (n,))


def node(a, b):
    return Value("Node", (a, b))


def test_flat_tree_bytes(store):
    schema = parse_schema(TREE)
    root = serialize(schema, "Tree", node(leaf(1), leaf(2)), store)
    assert store.compact(root.regions[0]).hex() == "00010100000000000000010200000000000000"


def test_factored_tree_bytes(store):
    schema = parse_schema(TREE + "\nlayout Tree = Factored")
    root = serialize(schema, "Tree", node(leaf(1), leaf(2)), store)
    tags, ints = (store.compact(r) for r in root.regions)
    assert tags.hex() == "000101"
    assert ints.hex() == "0100000000000000" "0200000000000000"


def test_nested_list_keeps_inner_lists_flat(store):
    schema = parse_schema(NESTED)
    inner = Value("Cons", (5, Value("Nil")))
    value = Value("NCons", (7, inner, Value("NNil")))
    root = serialize(schema, "NestedList", value, store)
    tags, heads, lists = (store.compact(r) for r in root.regions)
    assert tags.hex() == "0001"
    assert heads.hex() == "0700000000000000"
    assert lists.hex() == "00" "0500000000000000" "01"


def perfect(depth, start=0):
    if depth == 0:
        return leaf(start)
    return node(perfect(depth - 1, start), perfect(depth - 1, start + (1 << (depth - 1))))


def test_round_trip_with_redirections(tree_schema):
    store = RegionStore(first_chunk_size=32, check_writes=True)
    value = perfect(6)
    root = serialize(tree_schema, "Tree", value, store)
    assert len(store.chunk_sizes(root.regions[0])) > 1
    assert deserialize(root) == value


def test_deserialize_at_returns_end(store, tree_schema):
    value = node(leaf(1), node(leaf(2), leaf(3)))
    root = serialize(tree_schema, "Tree", value, store)
    decoded, end = deserialize_at(tree_schema, "Tree", store, root.bundle)
    assert decoded == value
    assert end == CursorBundle(store.frontier(r) for r in root.regions)


def test_flat_random_access_record(store):
    schema = parse_schema(TREE)
    root = serialize(schema, "Tree", node(leaf(1), leaf(2)), store,
                     random_access=True, features=Features(random_access=True))
    raw = store.compact(root.regions[0])
    assert raw[0] == 253
    # right child starts after the record, the Node tag and the left leaf
    assert Address.decode(raw, 1) == Address(root.regions[0], 0, 1 + 8 + 1 + 9)
    assert raw[9] == 0
    assert deserialize(root) == node(leaf(1), leaf(2))
    assert has_random_access(root)


def test_factored_random_access_slots_cover_every_buffer(store):
    schema = parse_schema(TREE + "\nlayout Tree = Factored")
    plan = compile_plan(schema, "Tree")
    assert plan.ra_width == 2
    root = serialize(schema, "Tree", node(leaf(1), leaf(2)), store,
                     random_access=True, features=Features(random_access=True))
    tags = store.compact(root.regions[0])
    assert Address.decode(tags, 1) == Address(root.regions[0], 0, 1 + 16 + 1 + 1)
    assert Address.decode(tags, 9) == Address(root.regions[1], 0, 8)


def test_random_access_needs_the_feature(store):
    schema = parse_schema(TREE)
    with pytest.raises(FeatureDisabled):
        serialize(schema, "Tree", leaf(1), store, random_access=True, features=Features(random_access=False))
    bundle = CursorBundle([store.frontier(store.new_region())])
    with pytest.raises(FeatureDisabled):
        write_random_access(schema, "Tree", "Node", bundle, store, Features(random_access=False))
    with pytest.raises(LayoutMismatch):
        write_random_access(schema, "Tree", "Leaf", bundle, store, Features(random_access=True))


def test_random_access_slots_must_be_filled(store, tree_schema):
    plan = compile_plan(tree_schema, "Tree")
    bundle = CursorBundle([store.frontier(store.new_region()) for _ in range(plan.buffer_count)])
    start = bundle.cursors[0]
    patch = write_random_access(tree_schema, "Tree", "Node", bundle, store, Features(random_access=True))
    assert bundle.cursors[0] == start.advance(plan.ra_record_width)
    with pytest.raises(DanglingPatch):
        patch.finish()
    with pytest.raises(LayoutMismatch):
        patch.fill(1, [])
    patch.fill(1, list(bundle.cursors))
    patch.finish()
    assert store.load_address(start.advance(1)) == bundle.cursors[0]


def test_shared_subtrees_become_indirections(store, tree_schema):
    shared = node(leaf(1), leaf(2))
    value = node(shared, node(leaf(1), leaf(2)))
    root = serialize_shared(tree_schema, "Tree", value, store)
    assert root.indirections == 2
    assert deserialize(root) == value


def test_indirection_feature_switch(store, tree_schema):
    target = serialize(tree_schema, "Tree", leaf(4), store)
    plan = compile_plan(tree_schema, "Tree")
    dst = CursorBundle(store.frontier(store.new_region()) for _ in range(plan.buffer_count))
    with pytest.raises(FeatureDisabled):
        write_indirection(tree_schema, "Tree", dst, target, Features(indirection=False))


def test_indirection_keeps_target_alive(store):
    schema = parse_schema(TREE)
    target = serialize(schema, "Tree", leaf(4), store)
    holder = store.new_region()
    start = store.frontier(holder)
    dst = CursorBundle([start])
    write_indirection(schema, "Tree", dst, target)
    assert store.refcount(target.regions[0]) == 2
    target.drop()
    assert store.is_alive(target.regions[0])
    decoded, _ = deserialize_at(schema, "Tree", store, CursorBundle([start]))
    assert decoded == leaf(4)


def test_schema_mismatch(store):
    schema = parse_schema(TREE)
    with pytest.raises(SchemaMismatch):
        serialize(schema, "Tree", Value("Cons", (1, Value("Nil"))), store)
    with pytest.raises(SchemaMismatch):
        check_value(schema, "Tree", node(leaf(1), 2))
    with pytest.raises(IntegerOutOfRange):
        check_value(schema, "Tree", leaf(1 << 63))


def test_values_json():
    value = node(leaf(1), node(leaf(-2), leaf(3)))
    assert load_values(dump_values([value])) == [value]
    assert value_from_json({"ctor": "Leaf", "args": [1]}) == leaf(1)
    with pytest.raises(IntegerOutOfRange):
        value_from_json({"ctor": "Leaf", "args": [1 << 60]})
    with pytest.raises(SchemaMismatch):
        value_from_json({"ctor": "Leaf", "args": [1.5]})


def test_deep_values_do_not_recurse():
    value = Value("Nil")
    for i in range(50_000):
        value = Value("Cons", (i, value))
    store = RegionStore(first_chunk_size=1 << 16, check_writes=False)
    root = serialize(parse_schema(LIST), "List", value, store)
    assert deserialize(root) == value


SCHEMAS = {
    "Tree": (TREE, "Tree"),
    "List": (LIST, "List"),
    "NestedList": (NESTED, "NestedList"),
    "KdTree": (KDTREE, "KdTree"),
}


ROUND_TRIP_CASES = (
    st.sampled_from(sorted(SCHEMAS)),
    st.sampled_from([Layout.FLAT, Layout.FACTORED]),
    st.booleans(),
    st.booleans(),
    st.integers(0, 2**32 - 1),
)


def check_round_trip(name, layout, random_access, share, seed):
    text, datatype = SCHEMAS[name]
    schema = parse_schema(text).with_layouts({datatype: layout})
    value = random_value(schema, datatype, np.random.default_rng(seed), max_nodes=40, max_depth=12)
    store = RegionStore(first_chunk_size=32, check_writes=True)
    features = Features(random_access=True)
    if share:
        root = serialize_shared(schema, datatype, value, store, random_access=random_access, features=features)
    else:
        root = serialize(schema, datatype, value, store, random_access=random_access, features=features)
    assert deserialize(root) == value


@settings(max_examples=400, deadline=None)
@given(*ROUND_TRIP_CASES)
def test_round_trip(name, layout, random_access, share, seed):
    check_round_trip(name, layout, random_access, share, seed)


@pytest.mark.slow
@settings(max_examples=10_000, deadline=None)
@given(*ROUND_TRIP_CASES)
def test_round_trip_at_scale(name, layout, random_access, share, seed):
    check_round_trip(name, layout, random_access, share, seed)
