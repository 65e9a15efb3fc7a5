from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from packedadt.errors import PassDefinitionError
from packedadt.schema.adt import AdtSchema, Packed


class PassKind(Enum):
    FOLD = "fold"
    MAP = "map"


class FoldStyle(Enum):
    """Structural folds combine child results; accumulator folds thread one value through preorder"""
    STRUCTURAL = "structural"
    ACCUMULATOR = "accumulator"


class CursorMode(Enum):
    IMMUTABLE = "immutable"
    MUTABLE = "mutable"

    @classmethod
    def parse(cls, text: str) -> "CursorMode":
        return cls(text.strip().lower())


@dataclass(init=True, repr=True, eq=False, frozen=True, slots=True)
class Clause:
    """
    What a pass does at one constructor.

    ``mask`` marks the fields the pass uses. Functions receive the used scalar
    fields as a tuple in field order:

    - ``combine(scalars, children)`` for structural folds,
    - ``step(scalars, acc)`` for accumulator folds,
    - ``prune(scalars)`` (structural, returns a result or None) or
      ``prune(scalars, acc)`` (accumulator, returns True to skip the children),
    - ``rewrite(scalars)`` for maps, over all scalar fields.
    """
    mask: tuple[bool, ...]
    combine: Callable | None = None
    step: Callable | None = None
    prune: Callable | None = None
    rewrite: Callable | None = None


@dataclass(init=True, repr=True, eq=False, frozen=True, slots=True)
class PassDef:
    name: str
    datatype: str
    kind: PassKind
    clauses: dict[str, Clause] = field(default_factory=dict)
    style: FoldStyle = FoldStyle.STRUCTURAL
    init: int = 0

    def clause(self, ctor: str) -> Clause:
        try:
            return self.clauses[ctor]
        except KeyError:
            raise PassDefinitionError(f"pass {self.name} has no clause for constructor {ctor}") from None

    def validate(self, schema: AdtSchema) -> None:
        """Check clauses against the schema over every datatype the pass reaches"""
        pending = [self.datatype]
        seen = set()
        while pending:
            name = pending.pop()
            if name in seen:
                continue
            seen.add(name)
            for ctor in schema.datatype(name).constructors:
                if self.kind is PassKind.MAP and ctor.name not in self.clauses:
                    continue
                clause = self.clause(ctor.name)
                if len(clause.mask) != ctor.arity:
                    raise PassDefinitionError(
                        f"pass {self.name}: mask for {ctor.name} has {len(clause.mask)} entries, arity is {ctor.arity}"
                    )
                if self.kind is PassKind.FOLD and self.style is FoldStyle.STRUCTURAL and clause.combine is None:
                    if clause.prune is None:
                        raise PassDefinitionError(f"pass {self.name}: {ctor.name} needs a combine function")
                for used, f in zip(clause.mask, ctor.fields):
                    if used and isinstance(f, Packed):
                        pending.append(f.datatype)
            if self.kind is PassKind.MAP:
                for ctor in schema.datatype(name).constructors:
                    pending.extend(f.datatype for f in ctor.fields if isinstance(f, Packed))

    def dead_field_fraction(self, schema: AdtSchema) -> float:
        """
        Dead fields over all declared fields of the constructors this pass has clauses for.

        Every mask entry counts once, scalar or packed, recursive fields included;
        nullary constructors add nothing. The wide list `reduce` pass masks 12 fields
        of `WCons` (11 Int, 1 tail) and keeps the head and the tail, so it reports
        10/12. Counting only the scalar fields a reducer could have read would give
        a smaller denominator; that convention is not used here.
        """
        total = dead = 0
        for ctor_name, clause in self.clauses.items():
            if not schema.has_constructor(ctor_name):
                continue
            total += len(clause.mask)
            dead += sum(not used for used in clause.mask)
        return dead / total if total else 0.0
