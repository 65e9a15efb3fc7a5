import numpy as np
import pytest

from packedadt.layout.values import Value, random_value
from packedadt.layout.writer import serialize
from packedadt.regions.runtime import RegionStore
from packedadt.schema.adt import Layout
from packedadt.socal.fuzz import FUZZ_SCHEMAS, bridge_mismatch, program_for_value
from packedadt.socal.machine import interpret
from packedadt.socal.parser import parse_socal
from packedadt.socal.store import CFact, CLoc, byte_offset, end_witness
from packedadt.socal.wellformed import PASS, check_well_formed
from packedadt.traversal.engine import skip_value

from conftest import DATA


def load(name):
    return parse_socal((DATA / name).read_text(encoding="utf-8"))


@pytest.mark.parametrize("name", ["buildtree.socal", "buildtree_flat.socal", "sumtree.socal"])
def test_final_state_is_well_formed(name):
    run = interpret(load(name))
    assert check_well_formed(run.envs, run.state) == PASS


def test_overwrite_fails_write_once_first():
    run = interpret(load("buildtree.socal"))
    (tags,) = [r for r in run.state.store if r.startswith("rt#")]
    run.state.write_cell(CLoc(tags, 0), "Leaf")
    report = check_well_formed(run.envs, run.state)
    assert not report.ok
    assert report.clause == "write-once"
    assert report.location == f"{tags}[0]"
    assert str(report).startswith("FAIL write-once")


LAYOUTS = pytest.mark.parametrize("layout", [Layout.FLAT, Layout.FACTORED], ids=["flat", "factored"])


def check_end_witness(layout, count, seed):
    schema = FUZZ_SCHEMAS[("Tree", layout)]
    rng = np.random.default_rng(seed)
    for _ in range(count):
        value = random_value(schema, "Tree", rng, max_nodes=24, max_depth=8, int_range=(-50, 50))
        run = interpret(program_for_value(schema, "Tree", value))
        assert run.decoded() == value
        assert bridge_mismatch(run, "Tree", value) is None

        end = end_witness(run.state, "Tree", run.state.locmap[run.value.loc])
        store = RegionStore(1 << 16)
        root = serialize(schema, "Tree", value, store, random_access=False)
        skipped = skip_value(schema, "Tree", root.bundle, store)
        if layout is Layout.FLAT:
            assert isinstance(end, CLoc)
            assert byte_offset(run.state, end) == skipped.index(0).offset
        else:
            assert isinstance(end, CFact)
            assert byte_offset(run.state, end.tag) == skipped.index(0).offset
            assert byte_offset(run.state, end.entry("Leaf", 0)) == skipped.index(1).offset
        root.drop()


@LAYOUTS
def test_end_witness_agrees_with_skip(layout):
    check_end_witness(layout, 20, 11)


@pytest.mark.slow
@LAYOUTS
def test_end_witness_agrees_with_skip_at_scale(layout):
    check_end_witness(layout, 1000, 12)


def test_written_nursery_location_fails():
    run = interpret(load("buildtree_flat.socal"))
    (region,) = list(run.state.store)
    run.state.locmap["stale"] = CLoc(region, 0)
    run.envs.nursery.add("stale")
    report = check_well_formed(run.envs, run.state)
    assert (report.ok, report.clause, report.location) == (False, "nursery", "stale")


def test_end_witness_counts_cells():
    flat = interpret(program_for_value(FUZZ_SCHEMAS[("Tree", Layout.FLAT)], "Tree", Value("Leaf", (1,))))
    root = flat.state.locmap[flat.value.loc]
    assert end_witness(flat.state, "Tree", root) == root.bumped(2)
    assert end_witness(flat.state, "Int", root.bumped()) == root.bumped(2)

    value = Value("Node", (Value("Leaf", (1,)), Value("Leaf", (2,))))
    factored = interpret(program_for_value(FUZZ_SCHEMAS[("Tree", Layout.FACTORED)], "Tree", value))
    root = factored.state.locmap[factored.value.loc]
    end = end_witness(factored.state, "Tree", root)
    assert end.tag == root.tag.bumped(3)
    assert end.entry("Leaf", 0) == root.entry("Leaf", 0).bumped(2)
