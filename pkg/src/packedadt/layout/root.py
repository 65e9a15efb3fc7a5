import logging
from dataclasses import dataclass, field

from packedadt.regions.address import Address
from packedadt.regions.runtime import RegionStore
from packedadt.schema.adt import AdtSchema, Layout
from packedadt.schema.shape import BufferShape

logger = logging.getLogger(__name__)


class CursorBundle:
    """One position per participating buffer; index 0 is the tag stream"""
    __slots__ = ["cursors"]

    def __init__(self, cursors):
        self.cursors: list[Address | None] = list(cursors)

    @classmethod
    def make(cls, *cursors: Address) -> "CursorBundle":
        """Assemble a bundle from component cursors (makeCursorArray)"""
        return cls(cursors)

    def index(self, i: int) -> Address | None:
        """Component cursor ``i`` (indexCursorArray)"""
        return self.cursors[i]

    def copy(self) -> "CursorBundle":
        return CursorBundle(self.cursors)

    def __len__(self) -> int:
        return len(self.cursors)

    def __iter__(self):
        return iter(self.cursors)

    def __eq__(self, other) -> bool:
        return isinstance(other, CursorBundle) and self.cursors == other.cursors

    def __repr__(self) -> str:
        return f"CursorBundle({self.cursors!r})"


@dataclass(slots=True)
class SerializedRoot:
    """A serialized value: where it starts in each buffer and which regions it owns"""
    schema: AdtSchema
    datatype: str
    shape: BufferShape
    bundle: CursorBundle
    regions: list[int]
    store: RegionStore
    random_access: bool = False
    indirections: int = 0
    dropped: bool = field(default=False, repr=False)

    @property
    def layout(self) -> Layout:
        return self.shape.layout

    def drop(self) -> None:
        """Release this root's reference to each region it owns, once"""
        if self.dropped:
            return
        self.dropped = True
        for region_id in self.regions:
            self.store.decref(region_id)
        logger.debug("dropped root of %s over regions %s", self.datatype, self.regions)
