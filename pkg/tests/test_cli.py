import json

import pytest

from packedadt.cli import main

from conftest import DATA


def test_schema_check(capsys):
    assert main(["schema", "check", str(DATA / "tree.adt")]) == 0
    assert capsys.readouterr().out.strip() == "Tree\tFactored\t2 buffers\ttags Leaf.0"


def test_schema_check_reports_bad_schema(tmp_path, capsys):
    bad = tmp_path / "bad.adt"
    bad.write_text("data Tree = Node Tree Missing\n", encoding="utf-8")
    assert main(["schema", "check", str(bad)]) == 2
    assert capsys.readouterr().err.startswith("error: ")


@pytest.mark.parametrize("layout", [[], ["--layout", "flat"]], ids=["as-declared", "flat"])
@pytest.mark.parametrize("extra", [[], ["--random-access"], ["--indirection"]])
def test_pack_unpack(tmp_path, capsys, layout, extra):
    out = tmp_path / "tree.fadt"
    args = ["pack", "--schema", str(DATA / "tree.adt"), "--type", "Tree", "--input", str(DATA / "tree_value.json"),
            "--out", str(out), *layout, *extra]
    assert main(args) == 0
    assert out.read_bytes()[:4] == b"FADT"
    assert main(["unpack", "--schema", str(DATA / "tree.adt"), str(out)]) == 0
    got = json.loads(capsys.readouterr().out)
    assert got == json.loads((DATA / "tree_value.json").read_text(encoding="utf-8"))


def test_unpack_rejects_garbage(tmp_path, capsys):
    junk = tmp_path / "junk.fadt"
    junk.write_bytes(b"not a container at all")
    assert main(["unpack", "--schema", str(DATA / "tree.adt"), str(junk)]) == 2
    assert "BadMagic" in capsys.readouterr().err


def test_socal_check(capsys):
    assert main(["socal", "check", str(DATA / "buildtree.socal")]) == 0
    assert capsys.readouterr().out.strip() == "accepted"


def test_socal_check_trace(capsys):
    assert main(["socal", "check", "--trace", str(DATA / "buildtree.socal")]) == 0
    lines = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert lines[0]["rule"] == "T-Fun"
    assert set(lines[0]) == {"rule", "e", "A", "N", "C_delta"}


def test_socal_check_rejects(capsys):
    assert main(["socal", "check", str(DATA / "double_write.socal")]) == 2
    assert "WriteToWrittenLocation" in capsys.readouterr().err


def test_socal_run(capsys):
    assert main(["socal", "run", str(DATA / "sumtree.socal")]) == 0
    assert capsys.readouterr().out.strip() == "4"


def test_socal_run_unchecked_gets_stuck(capsys):
    assert main(["socal", "run", "--no-check", str(DATA / "double_write.socal")]) == 3
    assert "Stuck" in capsys.readouterr().err


def test_socal_fuzz(capsys):
    assert main(["socal", "fuzz", "--seed", "2", "--count", "10"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["passed"] == 10
    assert summary["failures"] == []


def test_socal_fuzz_negative_control(capsys):
    assert main(["socal", "fuzz", "--negative-control", "--count", "5"]) == 0
    assert json.loads(capsys.readouterr().out) == {"seed": 0, "count": 5, "rejected": 5}


def test_bench_csv(capsys):
    args = ["bench", "run", "--suite", "MonoTree", "--pass", "sumTree", "--sizes", "15",
            "--layouts", "flat", "--modes", "mutable", "--reps", "3", "--format", "csv"]
    assert main(args) == 0
    lines = [line for line in capsys.readouterr().out.splitlines() if line.strip()]
    assert lines[0].startswith("suite,pass,size,layout,mode,median_ns,")
    assert len(lines) == 2
    assert lines[1].startswith("MonoTree,sumTree,15,flat,mutable,")


def test_bench_check_prints_to_stderr(capsys):
    args = ["bench", "run", "--suite", "MonoTree", "--pass", "sumTree", "--sizes", "7",
            "--layouts", "flat,factored", "--reps", "3", "--format", "json", "--check"]
    assert main(args) == 0
    captured = capsys.readouterr()
    assert len(json.loads(captured.out)) == 4
    assert "MonoTree/sumTree size 7" in captured.err
    assert "geometric mean S_fo" in captured.err


def test_bench_unknown_suite(capsys):
    assert main(["bench", "run", "--suite", "Graph"]) == 2
    assert "UnknownSuite" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    [],
    ["schema"],
    ["bench", "run", "--suite", "List", "--reps", "three"],
    ["pack", "--schema", "x.adt"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 1
    assert capsys.readouterr().err


def test_missing_file(capsys):
    assert main(["schema", "check", "/nonexistent/tree.adt"]) == 1
    assert capsys.readouterr().err.startswith("error: ")
