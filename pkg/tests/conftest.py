from pathlib import Path

import pytest

from packedadt.regions.runtime import RegionStore
from packedadt.schema.adt import Layout, parse_schema
from packedadt.traversal.passes import Clause, PassDef, PassKind

DATA = Path(__file__).resolve().parent.parent / "data"

TREE = "data Tree = Node Tree Tree | Leaf Int"
LIST = "data List = Cons Int List | Nil"
NESTED = (
    "data List = Cons Int List | Nil\n"
    "data NestedList = NCons Int List NestedList | NNil\n"
    "layout NestedList = Factored\n"
)
KDTREE = "data KdTree = KdNode " + " ".join(["Int"] * 9) + " KdTree KdTree | KdLeaf Int Int Int Int"

# payload of the rightmost leaf; the left subtree of every node is dead
RIGHTMOST = PassDef("rightmost", "Tree", PassKind.FOLD, {
    "Node": Clause((False, True), combine=lambda s, kids: kids[0]),
    "Leaf": Clause((True,), combine=lambda s, kids: s[0]),
})


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def store() -> RegionStore:
    return RegionStore(first_chunk_size=64, check_writes=True)


@pytest.fixture(params=[Layout.FLAT, Layout.FACTORED], ids=["flat", "factored"])
def layout(request) -> Layout:
    return request.param


@pytest.fixture
def tree_schema(layout):
    return parse_schema(TREE).with_layouts({"Tree": layout})
