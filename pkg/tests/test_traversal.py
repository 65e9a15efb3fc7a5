import pytest

from packedadt.bench.generators import generate
from packedadt.config import Features
from packedadt.errors import PassDefinitionError, PassNotFound, StackDepthExceeded, UnknownSuite
from packedadt.layout.reader import deserialize
from packedadt.layout.root import CursorBundle
from packedadt.layout.values import Value
from packedadt.layout.writer import serialize, serialize_shared
from packedadt.regions.runtime import RegionStore
from packedadt.schema.adt import Layout, parse_schema
from packedadt.schema.shape import buffer_shape
from packedadt.traversal import catalog
from packedadt.traversal.engine import reference_fold, reference_map, run_fold, run_map, skip_value
from packedadt.traversal.passes import CursorMode, PassKind

from conftest import RIGHTMOST, TREE

MODES = [CursorMode.IMMUTABLE, CursorMode.MUTABLE]

CASES = [
    ("List", "length", 40),
    ("List", "sumList", 40),
    ("List", "sumListAcc", 40),
    ("List", "add1", 40),
    ("MonoTree", "sumTree", 63),
    ("MonoTree", "sumTreeAcc", 63),
    ("MonoTree", "add1Tree", 63),
    ("TernaryTree", "sumTree", 40),
    ("TernaryTree", "add1Tree", 40),
    ("LinearListReduction", "reduce", 25),
    ("ReduceNestedList", "reduce", 12),
    ("KDTree", "countInRange", 200),
    ("KDTree", "sumMassInRange", 200),
    ("KDTree", "nearestDist", 200),
]


def big_store():
    return RegionStore(first_chunk_size=1 << 10, check_writes=True)


def serialized(suite_name, size, layout, store=None, **kwargs):
    suite = catalog.builtin_passes()[suite_name]
    schema = suite.schema(layout)
    value = generate(suite_name, size, 7)
    root = serialize(schema, suite.datatype, value, store or big_store(), **kwargs)
    return schema, value, root


def traverse(schema, passdef, root, mode):
    if passdef.kind is PassKind.FOLD:
        return run_fold(schema, passdef, root, mode)
    return run_map(schema, passdef, root, big_store(), mode)


@pytest.mark.parametrize("suite_name,pass_name,size", CASES)
@pytest.mark.parametrize("mode", MODES, ids=lambda m: m.value)
@pytest.mark.parametrize("random_access", [False, True], ids=["plain", "ra"])
def test_matches_the_in_memory_evaluation(layout, suite_name, pass_name, size, mode, random_access):
    _, passdef = catalog.lookup(suite_name, pass_name)
    schema, value, root = serialized(suite_name, size, layout, random_access=random_access,
                                     features=Features(random_access=True))
    report = traverse(schema, passdef, root, mode)
    if passdef.kind is PassKind.FOLD:
        assert report.result == reference_fold(schema, passdef, value)
    else:
        assert deserialize(report.result) == reference_map(passdef, value)


def test_through_indirections(layout):
    suite, passdef = catalog.lookup("MonoTree", "sumTree")
    schema = suite.schema(layout)
    sub = generate("MonoTree", 15, 1)
    value = Value("Node", (sub, Value("Node", (sub, generate("MonoTree", 7, 2)))))
    root = serialize_shared(schema, "Tree", value, big_store())
    assert root.indirections >= 2
    assert run_fold(schema, passdef, root).result == reference_fold(schema, passdef, value)
    _, add1 = catalog.lookup("MonoTree", "add1Tree")
    mapped = run_map(schema, add1, root, big_store())
    assert deserialize(mapped.result) == reference_map(add1, value)


def check_wide_list_counters(n):
    _, passdef = catalog.lookup("LinearListReduction", "reduce")
    schema, _, flat = serialized("LinearListReduction", n, Layout.FLAT)
    flat_report = run_fold(schema, passdef, flat)
    assert flat_report.bytes_read == [89 * n + 1]

    schema, _, factored = serialized("LinearListReduction", n, Layout.FACTORED)
    report = run_fold(schema, passdef, factored)
    assert report.roles[:2] == ["tags", "WCons.0"]
    assert report.bytes_read[0] == n + 1
    assert report.bytes_read[1] == 8 * n
    assert report.bytes_read[2:] == [0] * 10
    assert sum(report.bytes_read) == 9 * n + 1
    assert report.dead_field_fraction == pytest.approx(10 / 12)


def test_wide_list_counters():
    check_wide_list_counters(25)


@pytest.mark.slow
def test_wide_list_counters_at_scale():
    check_wide_list_counters(10**6)


def test_nested_list_never_touches_inner_lists():
    _, passdef = catalog.lookup("ReduceNestedList", "reduce")
    schema, _, factored = serialized("ReduceNestedList", 12, Layout.FACTORED)
    report = run_fold(schema, passdef, factored)
    assert report.roles == ["tags", "NCons.0", "NCons.1"]
    assert report.bytes_read[2] == 0
    schema, _, flat = serialized("ReduceNestedList", 12, Layout.FLAT)
    assert sum(report.bytes_read) < sum(run_fold(schema, passdef, flat).bytes_read)


@pytest.mark.parametrize("suite_name,pass_name,size", [c for c in CASES if c[1] not in ("add1", "add1Tree")])
def test_factored_reads_no_more_than_flat(suite_name, pass_name, size):
    _, passdef = catalog.lookup(suite_name, pass_name)
    schema, _, flat = serialized(suite_name, size, Layout.FLAT)
    flat_read = sum(run_fold(schema, passdef, flat).bytes_read)
    schema, _, factored = serialized(suite_name, size, Layout.FACTORED)
    assert sum(run_fold(schema, passdef, factored).bytes_read) <= flat_read


def test_counters_are_deterministic(layout):
    _, passdef = catalog.lookup("KDTree", "countInRange")
    schema, _, root = serialized("KDTree", 300, layout)
    first, second = run_fold(schema, passdef, root), run_fold(schema, passdef, root)
    assert (first.bytes_read, first.bytes_skipped, first.steps) == (second.bytes_read, second.bytes_skipped, second.steps)


def test_cursor_modes(layout):
    _, passdef = catalog.lookup("MonoTree", "sumTree")
    schema, value, root = serialized("MonoTree", 63, layout)
    mutable = run_fold(schema, passdef, root, CursorMode.MUTABLE)
    immutable = run_fold(schema, passdef, root, CursorMode.IMMUTABLE)
    assert mutable.bundle_copies == 0
    assert immutable.bundle_copies == value.node_count()
    assert mutable.result == immutable.result
    assert mutable.bytes_read == immutable.bytes_read


def test_small_tree_counters():
    suite, fold = catalog.lookup("MonoTree", "sumTree")
    _, add1 = catalog.lookup("MonoTree", "add1Tree")
    schema = suite.schema(Layout.FACTORED)
    value = Value("Node", (Value("Leaf", (1,)), Value("Leaf", (2,))))
    root = serialize(schema, "Tree", value, big_store())

    report = run_fold(schema, fold, root, CursorMode.MUTABLE)
    assert report.result == 3
    assert report.bytes_read == [3, 16]

    mapped = run_map(schema, add1, root, big_store(), CursorMode.MUTABLE)
    assert deserialize(mapped.result) == Value("Node", (Value("Leaf", (2,)), Value("Leaf", (3,))))
    assert mapped.bytes_written == mapped.bytes_read == [3, 16]


@pytest.mark.parametrize("mode", MODES, ids=lambda m: m.value)
def test_random_access_jumps_over_dead_subtrees(layout, mode):
    schema = parse_schema(TREE).with_layouts({"Tree": layout})
    value = generate("MonoTree", 63, 7)
    reports = {}
    for random_access in (False, True):
        store = RegionStore(first_chunk_size=32, check_writes=True)
        root = serialize(schema, "Tree", value, store, random_access=random_access,
                         features=Features(random_access=True))
        report = run_fold(schema, RIGHTMOST, root, mode)
        assert report.result == reference_fold(schema, RIGHTMOST, value)
        assert report.end == skip_value(schema, "Tree", root.bundle, store)
        reports[random_access] = report
    assert sum(reports[True].bytes_read) < sum(reports[False].bytes_read)
    assert reports[True].steps < reports[False].steps
    assert RIGHTMOST.dead_field_fraction(schema) == pytest.approx(1 / 3)


def test_stack_cap():
    _, passdef = catalog.lookup("MonoTree", "sumTree")
    schema, _, root = serialized("MonoTree", 63, Layout.FLAT)
    with pytest.raises(StackDepthExceeded):
        run_fold(schema, passdef, root, CursorMode.IMMUTABLE, cap=4)
    report = run_fold(schema, passdef, root, CursorMode.IMMUTABLE)
    assert report.max_stack > 4


def test_skip_value_reaches_the_frontier(layout):
    suite = catalog.builtin_passes()["ReduceNestedList"]
    schema = suite.schema(layout)
    store = big_store()
    root = serialize(schema, suite.datatype, generate("ReduceNestedList", 9, 3), store)
    end = skip_value(schema, suite.datatype, root.bundle, store)
    assert end == CursorBundle(store.frontier(r) for r in root.regions)


def test_end_witness_of_a_fold_covers_live_buffers():
    _, passdef = catalog.lookup("LinearListReduction", "reduce")
    schema, _, root = serialized("LinearListReduction", 10, Layout.FACTORED)
    report = run_fold(schema, passdef, root)
    assert report.end.index(0) == root.store.frontier(root.regions[0])
    assert report.end.index(1) == root.store.frontier(root.regions[1])
    assert report.end.index(2) is None


def test_catalog_lookup_errors():
    with pytest.raises(UnknownSuite):
        catalog.lookup("Nope", "sumTree")
    with pytest.raises(PassNotFound):
        catalog.lookup("MonoTree", "nope")


def test_pass_kind_is_checked():
    _, add1 = catalog.lookup("MonoTree", "add1Tree")
    _, sum_list = catalog.lookup("List", "sumList")
    schema, _, root = serialized("MonoTree", 7, Layout.FLAT)
    with pytest.raises(PassDefinitionError):
        run_fold(schema, add1, root)
    with pytest.raises(PassDefinitionError):
        run_fold(schema, sum_list, root)


def test_report_json(layout):
    _, passdef = catalog.lookup("MonoTree", "sumTree")
    schema, _, root = serialized("MonoTree", 7, layout)
    payload = run_fold(schema, passdef, root).to_json()
    assert payload["pass"] == "sumTree"
    assert payload["layout"] == layout.name.lower()
    assert [b["role"] for b in payload["buffers"]] == buffer_shape(schema, "Tree").roles()
