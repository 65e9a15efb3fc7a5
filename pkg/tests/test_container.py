import struct

import numpy as np
import pytest

from packedadt.bench.generators import generate
from packedadt.config import Features
from packedadt.errors import BadMagic, ContainerError, SchemaHashMismatch, TruncatedFile, VersionMismatch
from packedadt.layout.container import HEADER, MAGIC, export_container, import_container, measure, read_header
from packedadt.layout.reader import deserialize, has_random_access
from packedadt.layout.values import Value, random_value
from packedadt.layout.writer import serialize, serialize_shared
from packedadt.regions.runtime import RegionStore
from packedadt.schema.adt import Layout, parse_schema
from packedadt.traversal.engine import reference_fold, run_fold

from conftest import NESTED, RIGHTMOST, TREE


def sample(seed=0, nodes=60):
    schema = parse_schema(TREE)
    return random_value(schema, "Tree", np.random.default_rng(seed), max_nodes=nodes)


def test_flat_tree_image():
    schema = parse_schema(TREE)
    value = Value("Node", (Value("Leaf", (1,)), Value("Leaf", (2,))))
    data = export_container(serialize(schema, "Tree", value, RegionStore()))
    assert data[:4] == MAGIC
    layout, lengths, schema_hash = read_header(data)
    assert layout is Layout.FLAT
    assert lengths == [19]
    assert schema_hash == schema.schema_hash()
    assert data[HEADER.size + 8:].hex() == "00010100000000000000010200000000000000"


def test_round_trip(store, tree_schema):
    value = sample(seed=5)
    data = export_container(serialize(tree_schema, "Tree", value, store))
    root = import_container(data, tree_schema)
    assert root.datatype == "Tree"
    assert root.regions == list(range(len(root.regions)))
    assert deserialize(root) == value
    assert read_header(data)[1] == measure(tree_schema, "Tree", value)


def test_export_straightens_redirections_and_indirections(tree_schema):
    store = RegionStore(first_chunk_size=32, check_writes=True)
    shared = Value("Node", (Value("Leaf", (1,)), Value("Leaf", (2,))))
    value = Value("Node", (shared, Value("Node", (shared, sample(seed=2)))))
    root = serialize_shared(tree_schema, "Tree", value, store)
    assert root.indirections > 0
    data = export_container(root)
    _, lengths, _ = read_header(data)
    assert lengths == measure(tree_schema, "Tree", value)
    assert deserialize(import_container(data, tree_schema)) == value


def test_random_access_records_survive(store, tree_schema):
    value = sample(seed=9)
    root = serialize(tree_schema, "Tree", value, store, random_access=True, features=Features(random_access=True))
    imported = import_container(export_container(root), tree_schema)
    assert imported.random_access == has_random_access(root)
    assert deserialize(imported) == value


def test_random_access_slots_follow_the_target_store(tree_schema):
    value = generate("MonoTree", 63, 4)
    root = serialize(tree_schema, "Tree", value, RegionStore(), random_access=True,
                     features=Features(random_access=True))
    data = export_container(root)
    target = RegionStore(first_chunk_size=64, check_writes=True)
    occupied = [target.new_region() for _ in range(3)]
    imported = import_container(data, tree_schema, store=target)
    assert imported.random_access
    assert min(imported.regions) > max(occupied)
    assert set(target.regions) == set(occupied) | set(imported.regions)
    assert deserialize(imported) == value
    assert run_fold(tree_schema, RIGHTMOST, imported).result == reference_fold(tree_schema, RIGHTMOST, value)


def test_fresh_import_keeps_the_file_regions(tree_schema):
    value = generate("MonoTree", 15, 4)
    root = serialize(tree_schema, "Tree", value, RegionStore(), random_access=True,
                     features=Features(random_access=True))
    imported = import_container(export_container(root), tree_schema)
    assert imported.regions == list(range(len(imported.regions)))
    assert run_fold(tree_schema, RIGHTMOST, imported).result == value.args[1].args[1].args[1].args[0]


def test_picks_the_datatype_by_layout_and_buffer_count():
    schema = parse_schema(NESTED)
    value = Value("NCons", (3, Value("Cons", (4, Value("Nil"))), Value("NNil")))
    data = export_container(serialize(schema, "NestedList", value, RegionStore()))
    root = import_container(data, schema)
    assert root.datatype == "NestedList"
    assert deserialize(root) == value


@pytest.fixture
def image():
    schema = parse_schema(TREE)
    return schema, export_container(serialize(schema, "Tree", sample(), RegionStore()))


def test_bad_magic(image):
    schema, data = image
    with pytest.raises(BadMagic):
        import_container(b"NOPE" + data[4:], schema)


def test_version_mismatch(image):
    schema, data = image
    with pytest.raises(VersionMismatch):
        import_container(data[:4] + struct.pack("<H", 2) + data[6:], schema)


def test_schema_hash_mismatch(image):
    schema, data = image
    with pytest.raises(SchemaHashMismatch):
        import_container(data, schema.with_layouts({"Tree": Layout.FACTORED}))


@pytest.mark.parametrize("keep", [3, 10, HEADER.size + 4, -1])
def test_truncated(image, keep):
    schema, data = image
    with pytest.raises((TruncatedFile, BadMagic)):
        import_container(data[:keep], schema)


def test_trailing_bytes(image):
    schema, data = image
    with pytest.raises(ContainerError):
        import_container(data + b"\x00", schema)
