import logging
import struct

import numpy as np

from packedadt import config
from packedadt.errors import (
    DoubleWrite,
    InvalidChunkSize,
    NotAtFrontier,
    OutlinkOrderViolation,
    OutOfMemory,
    TruncatedBuffer,
    UseAfterFree,
)
from packedadt.regions.address import ADDRESS_WIDTH, RESERVE_ZONE, Address, ReservedTag

logger = logging.getLogger(__name__)

INT64 = struct.Struct("<q")
MAX_REGIONS = 1 << 16
MAX_CHUNKS = 1 << 16
MAX_CHUNK_SIZE = 1 << 32


class RefCount:
    """Region-level counter shared by every chunk footer of the region"""
    __slots__ = ["value"]

    def __init__(self, value: int = 1):
        self.value = value


class Chunk:
    """Payload bytes plus the footer record (size, refcount, outset, next)"""
    __slots__ = ["payload", "size", "used", "refcount", "outset", "next", "written"]

    def __init__(self, size: int, refcount: RefCount, track_writes: bool):
        self.payload = bytearray(size)
        self.size = size
        self.used = 0
        self.refcount = refcount
        self.outset: set[int] = set()
        self.next: int | None = None
        self.written = np.zeros(size, dtype=bool) if track_writes else None

    @property
    def limit(self) -> int:
        # the last RESERVE_ZONE bytes are kept for a redirection record
        return self.size - RESERVE_ZONE


class Region:
    __slots__ = ["id", "chunks", "refcount", "first_chunk_size"]

    def __init__(self, region_id: int, first_chunk_size: int, track_writes: bool):
        self.id = region_id
        self.refcount = RefCount(1)
        self.first_chunk_size = first_chunk_size
        self.chunks = [Chunk(first_chunk_size, self.refcount, track_writes)]

    @property
    def alive(self) -> bool:
        return self.refcount.value > 0


class RegionStore:
    """
    Growable byte regions made of doubling chunks.

    Writes happen only at a region's frontier. A unit of ``n`` bytes at offset ``o``
    is stored in place iff ``o + n <= size - 9``; otherwise a redirection record
    (tag 255 + encoded address) is written at ``o`` and the unit goes to the start
    of a freshly appended chunk of twice the size. Readers apply the same rule.
    """

    def __init__(self, first_chunk_size: int | None = None, check_writes: bool | None = None):
        """
        :param first_chunk_size: Default size of a region's first chunk, PACKEDADT_FIRST_CHUNK when omitted
        :param check_writes: Track written bytes and refuse rewrites, PACKEDADT_CHECK_WRITES when omitted
        """
        self.first_chunk_size = config.first_chunk_size() if first_chunk_size is None else first_chunk_size
        self.check_writes = config.check_writes() if check_writes is None else check_writes
        self.regions: dict[int, Region] = {}
        self._next_id = 0

    # allocation

    def new_region(self, first_chunk_size: int | None = None) -> int:
        size = self.first_chunk_size if first_chunk_size is None else first_chunk_size
        if size < config.MIN_FIRST_CHUNK:
            raise InvalidChunkSize(f"first chunk of {size} bytes is below the minimum of {config.MIN_FIRST_CHUNK}")
        if size > MAX_CHUNK_SIZE:
            raise OutOfMemory(f"first chunk of {size} bytes exceeds the 32-bit offset range")
        if self._next_id >= MAX_REGIONS:
            raise OutOfMemory(f"all {MAX_REGIONS} region ids are in use")
        region_id = self._next_id
        self._next_id += 1
        self.regions[region_id] = Region(region_id, size, self.check_writes)
        return region_id

    def _region(self, region_id: int) -> Region:
        region = self.regions.get(region_id)
        if region is None:
            state = "was reclaimed" if region_id < self._next_id else "does not exist"
            raise UseAfterFree(f"region {region_id} {state}")
        return region

    def _chunk(self, addr: Address) -> Chunk:
        region = self._region(addr.region)
        if not 0 <= addr.chunk < len(region.chunks):
            raise TruncatedBuffer(f"{addr} names a chunk that region {addr.region} does not have")
        return region.chunks[addr.chunk]

    def frontier(self, region_id: int) -> Address:
        region = self._region(region_id)
        last = len(region.chunks) - 1
        return Address(region_id, last, region.chunks[last].used)

    def reserve(self, addr: Address, n: int) -> Address:
        """
        Make room for an ``n`` byte unit at the frontier ``addr``.

        Parameters
        ----------
        addr : Address
            Must be the region's current frontier.
        n : int
            Unit width in bytes.

        Returns
        -------
        Address
            ``addr`` itself when the unit fits, otherwise the start of a new chunk
            linked from ``addr`` by a redirection record.
        """
        region = self._region(addr.region)
        last = len(region.chunks) - 1
        chunk = region.chunks[last]
        if addr.chunk != last or addr.offset != chunk.used:
            raise NotAtFrontier(f"{addr} is not the frontier {Address(addr.region, last, chunk.used)}")
        if addr.offset + n <= chunk.limit:
            return addr
        size = chunk.size * 2
        # wide units skip ahead to the first doubling that holds them
        while n > size - RESERVE_ZONE and size <= MAX_CHUNK_SIZE:
            size *= 2
        if size > MAX_CHUNK_SIZE or last + 1 >= MAX_CHUNKS:
            raise OutOfMemory(f"a {n} byte unit does not fit a {size} byte chunk of region {addr.region}")
        fresh = Chunk(size, region.refcount, self.check_writes)
        region.chunks.append(fresh)
        start = Address(addr.region, last + 1, 0)
        self._put(chunk, addr.offset, bytes([ReservedTag.REDIR]) + start.encode())
        chunk.used = addr.offset + RESERVE_ZONE
        chunk.next = last + 1
        logger.debug("region %d grew to chunk %d of %d bytes", addr.region, last + 1, size)
        return start

    def allocate(self, addr: Address, n: int) -> tuple[Address, Address]:
        """Reserve and bump past ``n`` bytes without writing them; returns (start, new frontier)"""
        start = self.reserve(addr, n)
        chunk = self.regions[addr.region].chunks[start.chunk]
        chunk.used = start.offset + n
        return start, start.advance(n)

    def append(self, addr: Address, data: bytes) -> Address:
        """Write ``data`` as one unit at the frontier and return the new frontier"""
        start, end = self.allocate(addr, len(data))
        self._put(self.regions[addr.region].chunks[start.chunk], start.offset, data)
        return end

    def append_int(self, addr: Address, value: int) -> Address:
        return self.append(addr, INT64.pack(value))

    def write(self, addr: Address, data: bytes) -> None:
        """Fill previously allocated bytes, e.g. back-patched address slots"""
        chunk = self._chunk(addr)
        if addr.offset + len(data) > chunk.used:
            raise TruncatedBuffer(f"write of {len(data)} bytes at {addr} runs past the allocated extent {chunk.used}")
        self._put(chunk, addr.offset, data)

    def _put(self, chunk: Chunk, offset: int, data: bytes) -> None:
        end = offset + len(data)
        if chunk.written is not None:
            if chunk.written[offset:end].any():
                raise DoubleWrite(f"bytes {offset}..{end} were already written")
            chunk.written[offset:end] = True
        chunk.payload[offset:end] = data

    # reading

    def resolve(self, addr: Address, n: int) -> Address:
        """Where an ``n`` byte unit written at ``addr`` actually lives"""
        while True:
            chunk = self._chunk(addr)
            if addr.offset + n <= chunk.limit:
                return addr
            addr = self._follow(chunk, addr)

    def _follow(self, chunk: Chunk, addr: Address) -> Address:
        if addr.offset + RESERVE_ZONE > chunk.used or chunk.payload[addr.offset] != ReservedTag.REDIR:
            raise TruncatedBuffer(f"no redirection record at {addr}, the buffer ends here")
        return Address.decode(chunk.payload, addr.offset + 1)

    def read(self, addr: Address, n: int) -> memoryview:
        """Raw contiguous bytes, no redirection handling"""
        chunk = self._chunk(addr)
        if addr.offset < 0 or addr.offset + n > chunk.used:
            raise TruncatedBuffer(f"read of {n} bytes at {addr} runs past the written extent {chunk.used}")
        return memoryview(chunk.payload)[addr.offset:addr.offset + n]

    def tag_at(self, addr: Address) -> tuple[int, Address]:
        """Tag byte at ``addr`` and the address it was actually found at"""
        while True:
            addr = self.resolve(addr, 1)
            chunk = self._chunk(addr)
            if addr.offset >= chunk.used:
                raise TruncatedBuffer(f"tag read at {addr} is past the written extent {chunk.used}")
            tag = chunk.payload[addr.offset]
            if tag != ReservedTag.REDIR:
                return tag, addr
            addr = self._follow(chunk, addr)

    def load_int(self, addr: Address) -> tuple[int, Address]:
        at = self.resolve(addr, INT64.size)
        (value,) = INT64.unpack_from(self.read(at, INT64.size))
        return value, at.advance(INT64.size)

    def load_address(self, addr: Address) -> Address:
        return Address.decode(self.read(addr, ADDRESS_WIDTH))

    def load_record(self, addr: Address, tag: int) -> tuple[Address, Address]:
        """Read a 9 byte ``tag`` + address record written as one unit; returns (target, address after record)"""
        at = self.resolve(addr, 1 + ADDRESS_WIDTH)
        body = self.read(at, 1 + ADDRESS_WIDTH)
        if body[0] != tag:
            raise TruncatedBuffer(f"expected record tag {tag} at {at}, found {body[0]}")
        return Address.decode(body, 1), at.advance(1 + ADDRESS_WIDTH)

    def skip_units(self, addr: Address, width: int, count: int) -> Address:
        """Bump past ``count`` consecutive ``width`` byte units, a chunk at a time"""
        while count > 0:
            addr = self.resolve(addr, width)
            chunk = self._chunk(addr)
            take = min(count, (chunk.limit - addr.offset) // width)
            if addr.offset + take * width > chunk.used:
                raise TruncatedBuffer(f"skip of {take} units of {width} bytes at {addr} passes the written extent")
            addr = addr.advance(take * width)
            count -= take
        return addr

    # reclamation

    def incref(self, region_id: int) -> int:
        region = self._region(region_id)
        region.refcount.value += 1
        return region.refcount.value

    def decref(self, region_id: int) -> int:
        """Drop one reference; a region reaching zero is freed and releases its outset"""
        region = self._region(region_id)
        region.refcount.value -= 1
        remaining = region.refcount.value
        pending = [region] if remaining == 0 else []
        while pending:
            dead = pending.pop()
            targets = set().union(*(c.outset for c in dead.chunks))
            dead.chunks = []
            del self.regions[dead.id]
            logger.debug("reclaimed region %d, releasing %d outlinks", dead.id, len(targets))
            for target_id in sorted(targets):
                target = self._region(target_id)
                target.refcount.value -= 1
                if target.refcount.value == 0:
                    pending.append(target)
        return remaining

    def record_outlink(self, source: Address, target: int) -> None:
        """Note that the chunk holding ``source`` points into region ``target``"""
        chunk = self._chunk(source)
        self._region(target)
        if target == source.region:
            return
        if target > source.region:
            raise OutlinkOrderViolation(f"region {source.region} may only point to older regions, not {target}")
        if target in chunk.outset:
            return
        chunk.outset.add(target)
        self.incref(target)

    def refcount(self, region_id: int) -> int:
        return self._region(region_id).refcount.value

    def is_alive(self, region_id: int) -> bool:
        region = self.regions.get(region_id)
        return region is not None and region.alive

    def chunk_sizes(self, region_id: int) -> list[int]:
        return [c.size for c in self._region(region_id).chunks]

    def compact(self, region_id: int, start: Address | None = None) -> bytes:
        """Bytes of a region from ``start`` to its frontier with redirection records dropped"""
        region = self._region(region_id)
        start = start or Address(region_id, 0, 0)
        parts = []
        for index in range(start.chunk, len(region.chunks)):
            chunk = region.chunks[index]
            begin = start.offset if index == start.chunk else 0
            end = chunk.used - RESERVE_ZONE if chunk.next is not None else chunk.used
            parts.append(bytes(chunk.payload[begin:end]))
        return b"".join(parts)
