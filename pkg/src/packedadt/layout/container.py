import logging
import struct
from time import perf_counter

from packedadt.config import MIN_FIRST_CHUNK, Features
from packedadt.errors import (
    BadMagic,
    ContainerError,
    SchemaHashMismatch,
    TruncatedFile,
    UnknownDatatype,
    VersionMismatch,
)
from packedadt.layout.plan import compile_plan
from packedadt.layout.reader import adopt_buffers, deserialize
from packedadt.layout.root import SerializedRoot
from packedadt.layout.values import Value
from packedadt.layout.writer import serialize
from packedadt.regions.address import RESERVE_ZONE
from packedadt.regions.runtime import RegionStore
from packedadt.schema.adt import AdtSchema, Layout

logger = logging.getLogger(__name__)

MAGIC = b"FADT"
VERSION = 1
HEADER = struct.Struct("<4sHBHQ")
LENGTH = struct.Struct("<Q")


def measure(schema: AdtSchema, datatype: str, value: Value, random_access: bool = False) -> list[int]:
    """Bytes ``value`` occupies in each buffer once serialized without redirections or indirections"""
    plan = compile_plan(schema, datatype)
    sizes = [0] * plan.buffer_count
    pending = [(plan, value)]
    while pending:
        p, v = pending.pop()
        cp = p.by_name[v.constructor]
        sizes[p.base] += 1
        if random_access and cp.has_ra_record:
            sizes[p.base] += p.ra_record_width
        for j in cp.scalars:
            sizes[cp.fields[j].buffer] += 8
        for j in cp.packed:
            pending.append((cp.fields[j].child, v.args[j]))
    return sizes


def buffer_payloads(root: SerializedRoot) -> list[bytes]:
    """Bytes of each buffer from the root's start, redirection records dropped"""
    return [root.store.compact(addr.region, addr) for addr in root.bundle.cursors]


def export_container(root: SerializedRoot) -> bytes:
    """
    Deep-copy ``root`` into a container file image.

    Every buffer is rewritten as one contiguous chunk, indirections are inlined
    and random-access records are kept when the source had them.
    """
    started = perf_counter()
    value = deserialize(root)
    sizes = measure(root.schema, root.datatype, value, root.random_access)
    fresh = RegionStore(check_writes=False)
    copy = serialize(
        root.schema,
        root.datatype,
        value,
        fresh,
        random_access=root.random_access,
        chunk_sizes=[max(MIN_FIRST_CHUNK, size + RESERVE_ZONE) for size in sizes],
        features=Features(random_access=True),
    )
    payloads = buffer_payloads(copy)
    header = HEADER.pack(MAGIC, VERSION, copy.layout.value, len(payloads), root.schema.schema_hash())
    lengths = b"".join(LENGTH.pack(len(p)) for p in payloads)
    logger.info(
        "exported %s container, %d buffers, %d bytes in %.4f s",
        root.datatype, len(payloads), sum(sizes), perf_counter() - started,
    )
    return header + lengths + b"".join(payloads)


def read_header(data: bytes) -> tuple[Layout, list[int], int]:
    """Validate the header; returns (layout, buffer lengths, schema hash)"""
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(f"not a container file, magic is {bytes(data[:4])!r}")
    if len(data) < HEADER.size:
        raise TruncatedFile(f"header needs {HEADER.size} bytes, the file has {len(data)}")
    _, version, layout_byte, count, schema_hash = HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionMismatch(f"container version {version}, expected {VERSION}")
    try:
        layout = Layout(layout_byte)
    except ValueError:
        raise ContainerError(f"unknown layout kind {layout_byte}") from None
    table_end = HEADER.size + LENGTH.size * count
    if len(data) < table_end:
        raise TruncatedFile(f"length table for {count} buffers is cut short")
    lengths = [LENGTH.unpack_from(data, HEADER.size + LENGTH.size * k)[0] for k in range(count)]
    return layout, lengths, schema_hash


def import_container(
    data: bytes, schema: AdtSchema, datatype: str | None = None, store: RegionStore | None = None
) -> SerializedRoot:
    """
    Load a container image into fresh regions, one per buffer.

    :param data: Container bytes
    :param schema: Schema the file was written with
    :param datatype: Root datatype; the first datatype with matching layout and buffer count when omitted
    :param store: Store to load into; a new one when omitted. Random-access slots name regions 0..k-1,
        so a root loaded at other ids is rewritten into fresh regions
    :return: A root readable in place
    """
    layout, lengths, schema_hash = read_header(data)
    if schema_hash != schema.schema_hash():
        raise SchemaHashMismatch(f"file schema hash {schema_hash:#018x} differs from {schema.schema_hash():#018x}")
    offset = HEADER.size + LENGTH.size * len(lengths)
    if len(data) < offset + sum(lengths):
        raise TruncatedFile(f"payloads need {sum(lengths)} bytes, {len(data) - offset} are present")
    if len(data) > offset + sum(lengths):
        raise ContainerError(f"{len(data) - offset - sum(lengths)} trailing bytes after the payloads")
    datatype = datatype or _pick_datatype(schema, layout, len(lengths))
    store = store or RegionStore()
    regions = []
    for length in lengths:
        region_id = store.new_region(max(MIN_FIRST_CHUNK, length + RESERVE_ZONE))
        if length:
            store.append(store.frontier(region_id), data[offset:offset + length])
        regions.append(region_id)
        offset += length
    logger.info("imported %s container with buffer lengths %s", datatype, lengths)
    root = adopt_buffers(schema, datatype, store, regions)
    if root.random_access and regions != list(range(len(regions))):
        root = _rebase(root, lengths)
    return root


def _rebase(root: SerializedRoot, lengths: list[int]) -> SerializedRoot:
    """Rewrite a loaded root into new regions so its random-access slots name the regions it now lives in"""
    value = deserialize(root)
    copy = serialize(
        root.schema,
        root.datatype,
        value,
        root.store,
        random_access=True,
        chunk_sizes=[max(MIN_FIRST_CHUNK, length + RESERVE_ZONE) for length in lengths],
        features=Features(random_access=True),
    )
    root.drop()
    logger.debug("rebased %s from regions %s to %s", root.datatype, root.regions, copy.regions)
    return copy


def _pick_datatype(schema: AdtSchema, layout: Layout, buffer_count: int) -> str:
    for dt in schema.datatypes:
        if dt.layout is layout and compile_plan(schema, dt.name).buffer_count == buffer_count:
            return dt.name
    raise UnknownDatatype(f"no {layout.name.lower()} datatype with {buffer_count} buffers in the schema")
