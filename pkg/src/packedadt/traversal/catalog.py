from dataclasses import dataclass, field

from packedadt.errors import PassNotFound, UnknownSuite
from packedadt.schema.adt import AdtSchema, Layout, parse_schema
from packedadt.traversal.passes import Clause, FoldStyle, PassDef, PassKind

T, F = True, False

# KDTree queries: an axis-aligned box and a point inside the [0, 1000) cube
QUERY_BOX = ((250, 750), (250, 750), (250, 750))
QUERY_POINT = (500, 500, 500)
FAR = 1 << 62


@dataclass(init=True, repr=True, eq=False, frozen=True, slots=True)
class Suite:
    """A benchmark datatype: its schema text, root datatype and the passes defined over it"""
    name: str
    schema_text: str
    datatype: str
    passes: dict[str, PassDef] = field(default_factory=dict)

    def schema(self, layout: Layout) -> AdtSchema:
        """The suite schema with the root datatype in ``layout``; nested datatypes keep theirs"""
        return parse_schema(self.schema_text).with_layouts({self.datatype: layout})

    def lookup(self, pass_name: str) -> PassDef:
        try:
            return self.passes[pass_name]
        except KeyError:
            raise PassNotFound(f"{self.name} has no pass {pass_name!r}; known: {', '.join(self.passes)}") from None


def _add1(scalars):
    return tuple(s + 1 for s in scalars)


def _list_suite() -> Suite:
    passes = [
        PassDef("add1", "List", PassKind.MAP, {"Cons": Clause((T, F), rewrite=_add1), "Nil": Clause(())}),
        PassDef("length", "List", PassKind.FOLD, {
            "Cons": Clause((F, T), combine=lambda s, k: 1 + k[0]),
            "Nil": Clause((), combine=lambda s, k: 0),
        }),
        PassDef("sumList", "List", PassKind.FOLD, {
            "Cons": Clause((T, T), combine=lambda s, k: s[0] + k[0]),
            "Nil": Clause((), combine=lambda s, k: 0),
        }),
        PassDef("sumListAcc", "List", PassKind.FOLD, {
            "Cons": Clause((T, T), step=lambda s, acc: acc + s[0]),
            "Nil": Clause(()),
        }, style=FoldStyle.ACCUMULATOR),
    ]
    return Suite("List", "data List = Cons Int List | Nil", "List", {p.name: p for p in passes})


def _mono_tree_suite() -> Suite:
    passes = [
        PassDef("add1Tree", "Tree", PassKind.MAP, {"Node": Clause((F, F)), "Leaf": Clause((T,), rewrite=_add1)}),
        PassDef("sumTree", "Tree", PassKind.FOLD, {
            "Node": Clause((T, T), combine=lambda s, k: k[0] + k[1]),
            "Leaf": Clause((T,), combine=lambda s, k: s[0]),
        }),
        PassDef("sumTreeAcc", "Tree", PassKind.FOLD, {
            "Node": Clause((T, T)),
            "Leaf": Clause((T,), step=lambda s, acc: acc + s[0]),
        }, style=FoldStyle.ACCUMULATOR),
    ]
    return Suite("MonoTree", "data Tree = Node Tree Tree | Leaf Int", "Tree", {p.name: p for p in passes})


def _ternary_tree_suite() -> Suite:
    passes = [
        PassDef("add1Tree", "TernaryTree", PassKind.MAP, {
            "TNode": Clause((T, F, F, F), rewrite=_add1),
            "TLeaf": Clause((T,), rewrite=_add1),
        }),
        PassDef("sumTree", "TernaryTree", PassKind.FOLD, {
            "TNode": Clause((T, T, T, T), combine=lambda s, k: s[0] + k[0] + k[1] + k[2]),
            "TLeaf": Clause((T,), combine=lambda s, k: s[0]),
        }),
    ]
    return Suite(
        "TernaryTree",
        "data TernaryTree = TNode Int TernaryTree TernaryTree TernaryTree | TLeaf Int",
        "TernaryTree",
        {p.name: p for p in passes},
    )


def _linear_list_suite() -> Suite:
    reduce = PassDef("reduce", "WideList", PassKind.FOLD, {
        "WCons": Clause((T,) + (F,) * 10 + (T,), step=lambda s, acc: acc + s[0]),
        "WNil": Clause(()),
    }, style=FoldStyle.ACCUMULATOR)
    text = "data WideList = WCons " + " ".join(["Int"] * 11) + " WideList | WNil"
    return Suite("LinearListReduction", text, "WideList", {"reduce": reduce})


def _nested_list_suite() -> Suite:
    reduce = PassDef("reduce", "NestedList", PassKind.FOLD, {
        "NCons": Clause((T, F, T), step=lambda s, acc: acc + s[0]),
        "NNil": Clause(()),
    }, style=FoldStyle.ACCUMULATOR)
    text = (
        "data List = Cons Int List | Nil\n"
        "data NestedList = NCons Int List NestedList | NNil\n"
        "layout List = Flat\n"
    )
    return Suite("ReduceNestedList", text, "NestedList", {"reduce": reduce})


def _disjoint(box: tuple[int, ...]) -> bool:
    minx, maxx, miny, maxy, minz, maxz = box
    (qx0, qx1), (qy0, qy1), (qz0, qz1) = QUERY_BOX
    return maxx < qx0 or minx > qx1 or maxy < qy0 or miny > qy1 or maxz < qz0 or minz > qz1


def _contained(box: tuple[int, ...]) -> bool:
    minx, maxx, miny, maxy, minz, maxz = box
    (qx0, qx1), (qy0, qy1), (qz0, qz1) = QUERY_BOX
    return qx0 <= minx and maxx <= qx1 and qy0 <= miny and maxy <= qy1 and qz0 <= minz and maxz <= qz1


def _inside(x: int, y: int, z: int) -> bool:
    (qx0, qx1), (qy0, qy1), (qz0, qz1) = QUERY_BOX
    return qx0 <= x <= qx1 and qy0 <= y <= qy1 and qz0 <= z <= qz1


def _mass_prune(s):
    # s = bounds (6) + mass
    if _disjoint(s[:6]):
        return 0
    if _contained(s[:6]):
        return s[6]
    return None


def _box_distance(box: tuple[int, ...]) -> int:
    total = 0
    for q, (lo, hi) in zip(QUERY_POINT, zip(box[0::2], box[1::2])):
        gap = lo - q if q < lo else q - hi if q > hi else 0
        total += gap * gap
    return total


def _point_distance(x: int, y: int, z: int) -> int:
    qx, qy, qz = QUERY_POINT
    return (x - qx) ** 2 + (y - qy) ** 2 + (z - qz) ** 2


def _kdtree_suite() -> Suite:
    # KdNode dim split minx maxx miny maxy minz maxz mass left right
    bounds = (F, F) + (T,) * 6
    passes = [
        PassDef("countInRange", "KdTree", PassKind.FOLD, {
            "KdNode": Clause(bounds + (F, T, T), prune=lambda s, acc: _disjoint(s)),
            "KdLeaf": Clause((T, T, T, F), step=lambda s, acc: acc + _inside(*s)),
        }, style=FoldStyle.ACCUMULATOR),
        PassDef("sumMassInRange", "KdTree", PassKind.FOLD, {
            "KdNode": Clause(bounds + (T, T, T), combine=lambda s, k: k[0] + k[1], prune=_mass_prune),
            "KdLeaf": Clause((T, T, T, T), combine=lambda s, k: s[3] if _inside(*s[:3]) else 0),
        }),
        PassDef("nearestDist", "KdTree", PassKind.FOLD, {
            "KdNode": Clause(bounds + (F, T, T), prune=lambda s, acc: _box_distance(s) >= acc),
            "KdLeaf": Clause((T, T, T, F), step=lambda s, acc: min(acc, _point_distance(*s))),
        }, style=FoldStyle.ACCUMULATOR, init=FAR),
    ]
    text = "data KdTree = KdNode " + " ".join(["Int"] * 9) + " KdTree KdTree | KdLeaf Int Int Int Int"
    return Suite("KDTree", text, "KdTree", {p.name: p for p in passes})


def builtin_passes() -> dict[str, Suite]:
    """Every benchmark suite by name"""
    suites = [
        _list_suite(),
        _mono_tree_suite(),
        _ternary_tree_suite(),
        _linear_list_suite(),
        _nested_list_suite(),
        _kdtree_suite(),
    ]
    return {s.name: s for s in suites}


def lookup(suite: str, pass_name: str) -> tuple[Suite, PassDef]:
    """
    :param suite: Suite name, e.g. ``MonoTree``
    :param pass_name: Pass name within the suite, e.g. ``sumTree``
    :return: The suite and its pass
    """
    suites = builtin_passes()
    if suite not in suites:
        raise UnknownSuite(f"unknown suite {suite!r}; known: {', '.join(suites)}")
    found = suites[suite]
    return found, found.lookup(pass_name)
