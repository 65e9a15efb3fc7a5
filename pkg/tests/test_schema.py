import pytest

from packedadt.errors import (
    DuplicateConstructor,
    DuplicateDatatype,
    FactoredInsideFlat,
    FieldOrderViolation,
    SchemaSyntaxError,
    TooManyConstructors,
    UnknownDatatype,
    UnsupportedFieldType,
)
from packedadt.schema.adt import INT, Layout, Packed, parse_schema
from packedadt.schema.shape import buffer_shape, cursor_count

from conftest import KDTREE, NESTED, TREE


def test_tags_follow_declaration_order():
    schema = parse_schema(TREE)
    tree = schema.datatype("Tree")
    assert [(c.name, c.tag) for c in tree.constructors] == [("Node", 0), ("Leaf", 1)]
    assert tree.constructor("Node").fields == (Packed("Tree"), Packed("Tree"))
    assert tree.constructor("Leaf").fields == (INT,)
    assert tree.layout is Layout.FLAT


def test_layout_statement_and_separators():
    schema = parse_schema("data Tree = Node Tree Tree | Leaf Int; layout Tree = Factored  # tags apart")
    assert schema.datatype("Tree").layout is Layout.FACTORED


def test_canonical_text_parses_back():
    schema = parse_schema(NESTED)
    again = parse_schema(schema.canonical_text())
    assert again == schema
    assert again.schema_hash() == schema.schema_hash()


def test_hash_depends_on_layout():
    flat = parse_schema(TREE)
    factored = flat.with_layouts({"Tree": Layout.FACTORED})
    assert flat.schema_hash() != factored.schema_hash()


@pytest.mark.parametrize(
    "text,error",
    [
        ("data Tree = Node Tree Tree | Leaf Float", UnsupportedFieldType),
        ("data T = K T Int | E", FieldOrderViolation),
        ("data L = Cons Int L | Nil\ndata M = C L Int | N", FieldOrderViolation),
        ("data T = A | B\ndata T = C", DuplicateDatatype),
        ("data T = A | B\ndata U = A", DuplicateConstructor),
        ("data T = K Missing", UnknownDatatype),
        ("layout T = Factored", UnknownDatatype),
        ("data T = A | B\nlayout T = Sideways", SchemaSyntaxError),
        ("type T = A", SchemaSyntaxError),
    ],
)
def test_rejects(text, error):
    with pytest.raises(error):
        parse_schema(text)


def test_too_many_constructors():
    text = "data Big = " + " | ".join(f"K{i}" for i in range(251))
    with pytest.raises(TooManyConstructors):
        parse_schema(text)
    parse_schema("data Big = " + " | ".join(f"K{i}" for i in range(250)))


def test_factored_inside_flat_is_rejected():
    text = "data List = Cons Int List | Nil\ndata Outer = O List Outer | E\nlayout List = Factored"
    with pytest.raises(FactoredInsideFlat):
        parse_schema(text)


def test_errors_carry_position():
    with pytest.raises(SchemaSyntaxError) as e:
        parse_schema("data T = A\nlayout T = Sideways")
    assert e.value.line == 2


def test_flat_shape_is_one_buffer():
    schema = parse_schema(KDTREE)
    shape = buffer_shape(schema, "KdTree")
    assert shape.buffer_count == 1
    assert shape.roles() == ["tags"]


def test_factored_tree_shape():
    schema = parse_schema(TREE + "\nlayout Tree = Factored")
    shape = buffer_shape(schema, "Tree")
    assert shape.buffer_count == 2
    assert shape.roles() == ["tags", "Leaf.0"]
    assert shape.entry("Leaf", 0).buffer == 1


def test_factored_kdtree_has_a_buffer_per_scalar():
    schema = parse_schema(KDTREE + "\nlayout KdTree = Factored")
    shape = buffer_shape(schema, "KdTree")
    assert shape.buffer_count == 1 + 9 + 4
    assert cursor_count(shape) == 14


def test_hybrid_nested_list_shape():
    schema = parse_schema(NESTED)
    shape = buffer_shape(schema, "NestedList")
    assert shape.roles() == ["tags", "NCons.0", "NCons.1"]
    nested = shape.entry("NCons", 1).nested
    assert nested.layout is Layout.FLAT and nested.base == 2


def test_data_files_parse(data_dir):
    for name in ("tree.adt", "nested_list.adt", "kdtree.adt"):
        parse_schema((data_dir / name).read_text())
