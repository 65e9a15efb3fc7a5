import struct
from enum import IntEnum
from typing import NamedTuple

from packedadt.errors import TruncatedBuffer

ADDRESS = struct.Struct("<Q")
ADDRESS_WIDTH = ADDRESS.size
# tag byte + encoded address
RECORD_WIDTH = 1 + ADDRESS_WIDTH
RESERVE_ZONE = RECORD_WIDTH


class ReservedTag(IntEnum):
    RANDOM_ACCESS = 253
    INDIR = 254
    REDIR = 255


class Address(NamedTuple):
    """Position inside a region: region id, chunk index, byte offset"""
    region: int
    chunk: int
    offset: int

    def advance(self, n: int) -> "Address":
        return Address(self.region, self.chunk, self.offset + n)

    def encode(self) -> bytes:
        """
        Pack into 8 little-endian bytes: region 16b | chunk 16b | offset 32b.

        Examples
        --------
        >>> Address(1, 0, 5).encode().hex()
        '0500000000000100'
        """
        return ADDRESS.pack((self.region << 48) | (self.chunk << 32) | self.offset)

    @classmethod
    def decode(cls, data: bytes | memoryview, at: int = 0) -> "Address":
        if len(data) < at + ADDRESS_WIDTH:
            raise TruncatedBuffer(f"need {ADDRESS_WIDTH} bytes for an address at {at}, have {len(data) - at}")
        (raw,) = ADDRESS.unpack_from(data, at)
        return cls(raw >> 48, (raw >> 32) & 0xFFFF, raw & 0xFFFFFFFF)
