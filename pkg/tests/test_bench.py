import json

import pytest

from packedadt.bench.experiment import (
    BenchRow,
    BenchSpec,
    SoftCheck,
    attach_speedups,
    geomean_speedup,
    run_experiment,
    run_grid,
    soft_checks,
)
from packedadt.bench.generators import generate
from packedadt.bench.report import COLUMNS, emit_report
from packedadt.errors import EmptyInput, InvalidArgument, UnknownSuite
from packedadt.schema.adt import Layout
from packedadt.traversal.passes import CursorMode


def row(layout, mode, median, suite="MonoTree", pass_name="sumTree", size=10):
    return BenchRow(suite, pass_name, size, layout, mode, median_ns=median)


def test_generators_are_deterministic():
    assert generate("KDTree", 50, 4) == generate("KDTree", 50, 4)
    assert generate("List", 50, 4) != generate("List", 50, 5)


def test_generator_sizes():
    assert generate("MonoTree", 7, 0).node_count() == 7
    # 10 nodes only fit the depth-2 perfect tree
    assert generate("MonoTree", 10, 0).node_count() == 7
    assert generate("TernaryTree", 13, 0).node_count() == 13
    assert generate("List", 5, 0).node_count() == 6
    wide = generate("LinearListReduction", 3, 0)
    assert wide.node_count() == 4
    assert wide.constructor == "WCons"
    assert len(wide.args) == 12


def test_kdtree_leaves_are_points():
    tree = generate("KDTree", 16, 0)
    pending, leaves = [tree], 0
    while pending:
        node = pending.pop()
        if node.constructor == "KdLeaf":
            leaves += 1
        else:
            pending.extend(node.args[-2:])
    assert leaves == 16


def test_generator_errors():
    with pytest.raises(UnknownSuite):
        generate("Graph", 10, 0)
    with pytest.raises(InvalidArgument):
        generate("List", 0, 0)


@pytest.mark.parametrize("kwargs", [
    {"sizes": ()},
    {"sizes": (100, 10)},
    {"repetitions": 2},
    {"layouts": ()},
    {"modes": ()},
])
def test_spec_validation(kwargs):
    with pytest.raises(InvalidArgument):
        BenchSpec("List", "sumList", **kwargs)


def test_speedups_fill_the_whole_group():
    rows = [
        row("flat", "immutable", 300.0),
        row("flat", "mutable", 200.0),
        row("factored", "immutable", 150.0),
        row("factored", "mutable", 100.0),
    ]
    attach_speedups(rows)
    for r in rows:
        assert (r.S_fo, r.S_fb, r.S_gm) == (2.0, 3.0, 1.5)


def test_speedups_need_both_sides():
    rows = [row("flat", "mutable", 200.0), row("factored", "mutable", None)]
    attach_speedups(rows)
    assert rows[0].S_fo is None
    assert rows[0].S_gm is None


def test_run_experiment_small():
    spec = BenchSpec("MonoTree", "sumTree", sizes=(7, 15), repetitions=3, seed=1)
    rows = run_experiment(spec)
    assert len(rows) == 8
    assert {(r.size, r.layout, r.mode) for r in rows} == {
        (s, layout, mode) for s in (7, 15) for layout in ("flat", "factored") for mode in ("immutable", "mutable")
    }
    assert all(r.status == "ok" for r in rows)
    assert all(r.median_ns is not None and r.median_ns > 0 for r in rows)
    assert all(r.S_fo is not None for r in rows)
    mutable = [r for r in rows if r.mode == "mutable"]
    assert all(r.bundle_copies == 0 for r in mutable)

    again = run_experiment(spec)
    assert [(r.bytes_read, r.steps) for r in rows] == [(r.bytes_read, r.steps) for r in again]


def test_run_experiment_reports_stack_overflow_as_status():
    spec = BenchSpec("MonoTree", "sumTree", sizes=(63,), layouts=(Layout.FLAT,), modes=(CursorMode.IMMUTABLE,),
                     repetitions=3, cap=4)
    (only,) = run_experiment(spec)
    assert only.status == "StackDepthExceeded"
    assert only.median_ns is None


def test_run_grid_keeps_order():
    specs = [
        BenchSpec("List", "length", sizes=(5,), repetitions=3),
        BenchSpec("MonoTree", "add1Tree", sizes=(3,), repetitions=3),
    ]
    rows = run_grid(specs)
    assert [r.suite for r in rows] == ["List"] * 4 + ["MonoTree"] * 4
    with pytest.raises(InvalidArgument):
        run_grid(specs, jobs=0)


def test_csv_report():
    rows = [row("flat", "mutable", 200.0), row("factored", "mutable", 100.0)]
    attach_speedups(rows)
    text = emit_report(rows, "csv")
    lines = text.split("\r\n")
    assert lines[0] == ",".join(COLUMNS)
    assert len([line for line in lines if line]) == 3
    assert lines[1].startswith("MonoTree,sumTree,10,flat,mutable,200.0,2.0,")


def test_json_report():
    records = json.loads(emit_report([row("flat", "mutable", 5.0)], "json"))
    assert len(records) == 1
    assert list(records[0]) == COLUMNS
    assert records[0]["status"] == "ok"
    assert records[0]["S_fo"] is None


def test_table_report():
    text = emit_report([row("flat", "mutable", 5.0)])
    assert "MonoTree" in text
    assert "suite" in text.splitlines()[0]


def test_report_errors():
    with pytest.raises(EmptyInput):
        emit_report([], "csv")
    with pytest.raises(InvalidArgument):
        emit_report([row("flat", "mutable", 5.0)], "xml")


def test_soft_checks_use_the_largest_size():
    rows = []
    for size, speedup in ((10, 1.0), (100, 5.0)):
        flat = row("flat", "mutable", 100.0 * speedup, "LinearListReduction", "reduce", size)
        factored = row("factored", "mutable", 100.0, "LinearListReduction", "reduce", size)
        rows += [flat, factored]
    rows.append(row("flat", "mutable", 100.0, "ReduceNestedList", "reduce", 10))
    attach_speedups(rows)
    checks = soft_checks(rows)
    assert [(c.suite, c.size, c.verdict) for c in checks] == [
        ("LinearListReduction", 100, "PASS"),
        ("ReduceNestedList", 10, "WARN"),
    ]
    assert str(checks[1]).endswith("S_fo = n/a (want >= 4.0)")


def test_soft_check_threshold():
    assert SoftCheck("MonoTree", "sumTree", 10, "S_gm", 1.1, 1.1).verdict == "PASS"
    assert SoftCheck("MonoTree", "sumTree", 10, "S_gm", 1.1, 1.0).verdict == "WARN"


def test_geomean_counts_each_group_once():
    rows = [
        row("flat", "mutable", 200.0, size=1), row("factored", "mutable", 100.0, size=1),
        row("flat", "mutable", 800.0, size=2), row("factored", "mutable", 100.0, size=2),
    ]
    attach_speedups(rows)
    assert geomean_speedup(rows) == pytest.approx(4.0)
    assert geomean_speedup([row("flat", "mutable", 1.0)]) is None
