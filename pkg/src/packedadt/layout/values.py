import json
from dataclasses import dataclass

import numpy as np

from packedadt.errors import IntegerOutOfRange, SchemaMismatch
from packedadt.schema.adt import AdtSchema, Packed, ScalarInt

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1
JSON_SAFE = (1 << 53) - 1


@dataclass(init=True, repr=False, eq=False, frozen=True, slots=True)
class Value:
    """In-memory reference form of a datatype value: constructor name and arguments"""
    constructor: str
    args: tuple = ()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Value):
            return NotImplemented
        pending = [(self, other)]
        while pending:
            a, b = pending.pop()
            if a is b:
                continue
            if a.constructor != b.constructor or len(a.args) != len(b.args):
                return False
            for x, y in zip(a.args, b.args):
                if isinstance(x, Value) and isinstance(y, Value):
                    pending.append((x, y))
                elif isinstance(x, Value) or isinstance(y, Value) or x != y:
                    return False
        return True

    __hash__ = object.__hash__

    def __repr__(self) -> str:
        out = []
        # items are either a Value to open or a literal piece of text
        pending: list = [self]
        while pending:
            item = pending.pop()
            if isinstance(item, str):
                out.append(item)
            elif isinstance(item, Value):
                if not item.args:
                    out.append(item.constructor)
                    continue
                out.append(item.constructor + "(")
                pending.append(")")
                for i in reversed(range(len(item.args))):
                    pending.append(item.args[i])
                    if i:
                        pending.append(", ")
            else:
                out.append(repr(item))
        return "".join(out)

    def preorder(self):
        """Every node of the value, parent before children"""
        pending = [self]
        while pending:
            node = pending.pop()
            yield node
            pending.extend(a for a in reversed(node.args) if isinstance(a, Value))

    def node_count(self) -> int:
        return sum(1 for _ in self.preorder())

    def to_json(self) -> dict:
        """Nested ``{"ctor": ..., "args": [...]}`` form"""
        root: dict = {"ctor": self.constructor, "args": []}
        pending = [(self, root)]
        while pending:
            node, out = pending.pop()
            for a in node.args:
                if isinstance(a, Value):
                    child = {"ctor": a.constructor, "args": []}
                    out["args"].append(child)
                    pending.append((a, child))
                else:
                    out["args"].append(a)
        return root


def value_from_json(data) -> Value:
    """
    Build a Value from its nested JSON form.

    Parameters
    ----------
    data : dict
        ``{"ctor": name, "args": [int | dict, ...]}``.

    Returns
    -------
    Value

    Examples
    --------
    >>> value_from_json({"ctor": "Leaf", "args": [1]})
    Leaf(1)
    """
    if not isinstance(data, dict):
        raise SchemaMismatch(f"expected an object with 'ctor' and 'args', got {type(data).__name__}")
    # post-order rebuild: (json node, done flag)
    built: list[Value] = []
    pending = [(data, False)]
    while pending:
        node, done = pending.pop()
        if not isinstance(node, dict) or not isinstance(node.get("ctor"), str):
            raise SchemaMismatch(f"malformed value node {node!r:.80}")
        args = node.get("args", [])
        if not isinstance(args, list):
            raise SchemaMismatch(f"'args' of {node['ctor']} must be a list")
        children = [a for a in args if isinstance(a, dict)]
        if not done:
            pending.append((node, True))
            pending.extend((c, False) for c in reversed(children))
            continue
        kids = built[len(built) - len(children):] if children else []
        del built[len(built) - len(children):]
        it = iter(kids)
        converted = []
        for a in args:
            if isinstance(a, dict):
                converted.append(next(it))
            elif isinstance(a, bool) or not isinstance(a, int):
                raise SchemaMismatch(f"argument {a!r} of {node['ctor']} is neither an integer nor a value")
            elif abs(a) > JSON_SAFE:
                raise IntegerOutOfRange(f"{a} does not fit in 53 bits")
            else:
                converted.append(a)
        built.append(Value(node["ctor"], tuple(converted)))
    return built[0]


def load_values(text: str) -> list[Value]:
    """A values.json document holds one value object or a list of them"""
    data = json.loads(text)
    items = data if isinstance(data, list) else [data]
    return [value_from_json(item) for item in items]


def dump_values(values: list[Value]) -> str:
    payload = [v.to_json() for v in values]
    return json.dumps(payload[0] if len(payload) == 1 else payload)


def check_value(schema: AdtSchema, datatype: str, value: Value) -> None:
    """Raise SchemaMismatch unless ``value`` conforms to ``datatype``"""
    pending = [(datatype, value)]
    while pending:
        dt_name, node = pending.pop()
        dt = schema.datatype(dt_name)
        if not isinstance(node, Value):
            raise SchemaMismatch(f"expected a {dt_name} value, got {node!r:.80}")
        try:
            ctor = dt.constructor(node.constructor)
        except KeyError:
            raise SchemaMismatch(f"{node.constructor!r} is not a constructor of {dt_name}") from None
        if len(node.args) != ctor.arity:
            raise SchemaMismatch(f"{ctor.name} takes {ctor.arity} arguments, got {len(node.args)}")
        for f, a in zip(ctor.fields, node.args):
            if isinstance(f, ScalarInt):
                if isinstance(a, bool) or not isinstance(a, int):
                    raise SchemaMismatch(f"{ctor.name} expects an Int, got {a!r:.80}")
                if not INT64_MIN <= a <= INT64_MAX:
                    raise IntegerOutOfRange(f"{a} does not fit in a signed 64-bit field")
            else:
                pending.append((f.datatype, a))


def random_value(
    schema: AdtSchema,
    datatype: str,
    rng: np.random.Generator,
    max_nodes: int = 64,
    max_depth: int = 12,
    int_range: tuple[int, int] = (-1000, 1000),
) -> Value:
    """
    Seeded random value of ``datatype``; recursion stops by picking the constructor
    with the fewest packed fields once the depth or node budget is spent.
    """
    budget = [max_nodes]

    def pick(dt_name: str, depth: int):
        dt = schema.datatype(dt_name)
        if depth >= max_depth or budget[0] <= 0:
            ctor = min(dt.constructors, key=lambda c: sum(isinstance(f, Packed) for f in c.fields))
        else:
            ctor = dt.constructors[int(rng.integers(len(dt.constructors)))]
        budget[0] -= 1
        return ctor

    # post-order build with an explicit stack: (datatype, depth, ctor or None)
    built: list = []
    pending: list = [(datatype, 0, None)]
    while pending:
        dt_name, depth, ctor = pending.pop()
        if ctor is None:
            ctor = pick(dt_name, depth)
            pending.append((dt_name, depth, ctor))
            for f in reversed(ctor.fields):
                if isinstance(f, Packed):
                    pending.append((f.datatype, depth + 1, None))
            continue
        packed = sum(isinstance(f, Packed) for f in ctor.fields)
        kids = built[len(built) - packed:] if packed else []
        del built[len(built) - packed:]
        it = iter(kids)
        args = tuple(
            int(rng.integers(int_range[0], int_range[1] + 1)) if isinstance(f, ScalarInt) else next(it)
            for f in ctor.fields
        )
        built.append(Value(ctor.name, args))
    return built[0]
