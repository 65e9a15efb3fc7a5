import struct

import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from packedadt.errors import (
    DoubleWrite,
    InvalidChunkSize,
    NotAtFrontier,
    OutlinkOrderViolation,
    TruncatedBuffer,
    UseAfterFree,
)
from packedadt.regions.address import Address, ReservedTag
from packedadt.regions.runtime import RegionStore

INT64 = struct.Struct("<q")


def test_address_encoding():
    addr = Address(3, 2, 77)
    assert Address.decode(addr.encode()) == addr
    assert Address(1, 0, 5).encode().hex() == "0500000000000100"


def test_chunks_double(store):
    region = store.new_region()
    at = store.frontier(region)
    for i in range(200):
        at = store.append_int(at, i)
    sizes = store.chunk_sizes(region)
    assert sizes[0] == 64
    assert all(b == 2 * a for a, b in zip(sizes, sizes[1:]))
    assert store.compact(region) == b"".join(INT64.pack(i) for i in range(200))


def test_unit_fits_up_to_reserve_zone(store):
    region = store.new_region()
    at = store.append(store.frontier(region), bytes(46))
    # 46 + 9 == 64 - 9, still in place
    at = store.append(at, bytes(range(9)))
    assert at == Address(region, 0, 55)
    assert store.chunk_sizes(region) == [64]
    at = store.append(at, b"\x01")
    assert at == Address(region, 1, 1)
    assert store.read(Address(region, 0, 55), 1)[0] == ReservedTag.REDIR
    assert store.load_address(Address(region, 0, 56)) == Address(region, 1, 0)


def test_reader_follows_redirection(store):
    region = store.new_region()
    at = store.append(store.frontier(region), bytes(50))
    store.append_int(at, -7)
    value, after = store.load_int(Address(region, 0, 50))
    assert value == -7
    assert after == Address(region, 1, 8)


def test_write_only_at_frontier(store):
    region = store.new_region()
    store.append(store.frontier(region), b"ab")
    with pytest.raises(NotAtFrontier):
        store.append(Address(region, 0, 0), b"c")


def test_no_byte_written_twice(store):
    region = store.new_region()
    start, _ = store.allocate(store.frontier(region), 8)
    store.write(start, bytes(8))
    with pytest.raises(DoubleWrite):
        store.write(start, bytes(8))


def test_unchecked_store_allows_patching():
    store = RegionStore(first_chunk_size=64, check_writes=False)
    region = store.new_region()
    start, _ = store.allocate(store.frontier(region), 8)
    store.write(start, bytes(8))
    store.write(start, INT64.pack(5))
    assert store.load_int(start)[0] == 5


def test_read_past_extent(store):
    region = store.new_region()
    store.append(store.frontier(region), b"x")
    with pytest.raises(TruncatedBuffer):
        store.load_int(Address(region, 0, 0))


def test_chunk_size_minimum(store):
    with pytest.raises(InvalidChunkSize):
        store.new_region(16)


def test_reclaimed_region_is_unusable(store):
    region = store.new_region()
    assert store.decref(region) == 0
    assert not store.is_alive(region)
    with pytest.raises(UseAfterFree):
        store.frontier(region)


def test_reclaimed_regions_leave_the_table(store):
    old = store.new_region()
    new = store.new_region()
    store.record_outlink(store.frontier(new), old)
    store.decref(old)
    store.decref(new)
    assert store.regions == {}
    with pytest.raises(UseAfterFree, match="reclaimed"):
        store.refcount(old)
    with pytest.raises(UseAfterFree, match="does not exist"):
        store.frontier(Address(7, 0, 0))
    assert store.new_region() == 2


def test_outlinks_keep_targets_alive(store):
    old = store.new_region()
    new = store.new_region()
    store.record_outlink(store.frontier(new), old)
    store.record_outlink(store.frontier(new), old)
    assert store.refcount(old) == 2
    store.decref(old)
    assert store.is_alive(old)
    store.decref(new)
    assert not store.is_alive(new)
    assert not store.is_alive(old)


def test_outlinks_point_to_older_regions(store):
    old = store.new_region()
    new = store.new_region()
    with pytest.raises(OutlinkOrderViolation):
        store.record_outlink(store.frontier(old), new)


UNIT_SCRIPTS = st.lists(st.integers(1, 40), min_size=1, max_size=120)


def check_units_round_trip(units):
    store = RegionStore(first_chunk_size=32, check_writes=True)
    region = store.new_region()
    at = store.frontier(region)
    expected = bytearray()
    for i, n in enumerate(units):
        data = bytes([i % 200]) * n
        at = store.append(at, data)
        expected += data
    sizes = store.chunk_sizes(region)
    assert all(b == 2 * a for a, b in zip(sizes, sizes[1:]))
    assert store.compact(region) == bytes(expected)


@settings(max_examples=200, deadline=None)
@given(UNIT_SCRIPTS)
def test_random_units_round_trip(units):
    check_units_round_trip(units)


@pytest.mark.slow
@settings(max_examples=1000, deadline=None)
@given(UNIT_SCRIPTS)
def test_random_units_round_trip_at_scale(units):
    check_units_round_trip(units)


@st.composite
def region_graphs(draw):
    count = draw(st.integers(2, 8))
    edges = [sorted(draw(st.sets(st.integers(0, i - 1)))) if i else [] for i in range(count)]
    order = draw(st.permutations(range(count)))
    return count, edges, order


def check_reclamation(graph):
    count, edges, order = graph
    store = RegionStore(first_chunk_size=64, check_writes=True)
    ids = [store.new_region() for _ in range(count)]
    for source, targets in enumerate(edges):
        for target in targets:
            store.record_outlink(store.frontier(ids[source]), ids[target])
    held = set(range(count))
    for released in order:
        store.decref(ids[released])
        held.discard(released)
        reachable = set()
        pending = list(held)
        while pending:
            node = pending.pop()
            if node in reachable:
                continue
            reachable.add(node)
            pending.extend(edges[node])
        assert {i for i in range(count) if store.is_alive(ids[i])} == reachable
        assert set(store.regions) == {ids[i] for i in reachable}


@settings(max_examples=300, deadline=None)
@given(region_graphs())
def test_reclamation_matches_reachability(graph):
    check_reclamation(graph)


@pytest.mark.slow
@settings(max_examples=1000, deadline=None)
@given(region_graphs())
def test_reclamation_matches_reachability_at_scale(graph):
    check_reclamation(graph)
