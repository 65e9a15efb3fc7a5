import logging
from time import perf_counter

import numpy as np

from packedadt.errors import InvalidArgument, UnknownSuite
from packedadt.layout.values import Value

logger = logging.getLogger(__name__)

# scalar payloads stay small so folds never leave the signed 64-bit range
PAYLOAD = 100
COORDINATE = 1000
INNER_LENGTH = (4, 32)
WIDE_FIELDS = 11


def _chain(cons: str, nil: str, payloads) -> Value:
    out = Value(nil)
    for scalars in reversed(payloads):
        out = Value(cons, (*scalars, out))
    return out


def _int_list(values) -> Value:
    return _chain("Cons", "Nil", [(int(v),) for v in values])


def _perfect_depth(size: int, arity: int) -> int:
    """Depth of the deepest perfect ``arity``-ary tree with at most ``size`` nodes"""
    depth, nodes, level = 0, 1, 1
    while True:
        level *= arity
        if nodes + level > size:
            return depth
        nodes += level
        depth += 1


def _mono_tree(size: int, rng: np.random.Generator) -> Value:
    depth = _perfect_depth(size, 2)
    level = [Value("Leaf", (int(v),)) for v in rng.integers(0, PAYLOAD, 1 << depth)]
    while len(level) > 1:
        level = [Value("Node", (level[i], level[i + 1])) for i in range(0, len(level), 2)]
    return level[0]


def _ternary_tree(size: int, rng: np.random.Generator) -> Value:
    depth = _perfect_depth(size, 3)
    level = [Value("TLeaf", (int(v),)) for v in rng.integers(0, PAYLOAD, 3 ** depth)]
    while len(level) > 1:
        payload = rng.integers(0, PAYLOAD, len(level) // 3)
        level = [
            Value("TNode", (int(payload[i // 3]), level[i], level[i + 1], level[i + 2]))
            for i in range(0, len(level), 3)
        ]
    return level[0]


def _list(size: int, rng: np.random.Generator) -> Value:
    return _int_list(rng.integers(0, PAYLOAD, size))


def _wide_list(size: int, rng: np.random.Generator) -> Value:
    cells = rng.integers(0, PAYLOAD, (size, WIDE_FIELDS))
    return _chain("WCons", "WNil", [tuple(int(v) for v in row) for row in cells])


def _nested_list(size: int, rng: np.random.Generator) -> Value:
    lo, hi = INNER_LENGTH
    lengths = rng.integers(lo, hi + 1, size)
    heads = rng.integers(0, PAYLOAD, size)
    cells = [(int(h), _int_list(rng.integers(0, PAYLOAD, int(n)))) for h, n in zip(heads, lengths)]
    return _chain("NCons", "NNil", cells)


def _kd_build(points: np.ndarray, masses: np.ndarray, depth: int) -> tuple[Value, int]:
    if len(points) == 1:
        x, y, z = (int(c) for c in points[0])
        return Value("KdLeaf", (x, y, z, int(masses[0]))), int(masses[0])
    dim = depth % 3
    order = np.argsort(points[:, dim], kind="stable")
    points, masses = points[order], masses[order]
    mid = len(points) // 2
    left, left_mass = _kd_build(points[:mid], masses[:mid], depth + 1)
    right, right_mass = _kd_build(points[mid:], masses[mid:], depth + 1)
    lo, hi = points.min(axis=0), points.max(axis=0)
    bounds = (int(lo[0]), int(hi[0]), int(lo[1]), int(hi[1]), int(lo[2]), int(hi[2]))
    mass = left_mass + right_mass
    return Value("KdNode", (dim, int(points[mid, dim]), *bounds, mass, left, right)), mass


def _kd_tree(size: int, rng: np.random.Generator) -> Value:
    points = rng.integers(0, COORDINATE, (size, 3))
    masses = rng.integers(1, 10, size)
    return _kd_build(points, masses, 0)[0]


GENERATORS = {
    "List": _list,
    "MonoTree": _mono_tree,
    "TernaryTree": _ternary_tree,
    "LinearListReduction": _wide_list,
    "ReduceNestedList": _nested_list,
    "KDTree": _kd_tree,
}


def generate(suite: str, size: int, seed: int) -> Value:
    """
    Build a deterministic input value for a benchmark suite.

    Parameters
    ----------
    suite : str
        Suite name, one of ``GENERATORS``.
    size : int
        Node budget. Perfect-tree suites build the deepest perfect tree that fits,
        list suites count cells, ReduceNestedList counts outer cells and KDTree
        counts points (one per leaf).
    seed : int
        Seed for ``numpy.random.default_rng``.

    Returns
    -------
    Value

    Examples
    --------
    >>> generate("MonoTree", 7, 0).node_count()
    7
    >>> generate("LinearListReduction", 3, 0).node_count()
    4
    """
    if suite not in GENERATORS:
        raise UnknownSuite(f"unknown suite {suite!r}; known: {', '.join(GENERATORS)}")
    if size < 1:
        raise InvalidArgument(f"size must be at least 1, got {size}")
    start = perf_counter()
    value = GENERATORS[suite](size, np.random.default_rng(seed))
    logger.debug("generated %s input of size %d in %.3fs", suite, size, perf_counter() - start)
    return value
