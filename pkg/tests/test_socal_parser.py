import pytest

from packedadt.errors import SchemaError, SocalSyntaxError, UnboundName
from packedadt.schema.adt import Layout, parse_schema
from packedadt.socal.parser import parse_socal
from packedadt.socal.printer import show_program
from packedadt.socal.syntax import INT_T, App, LetRegion, LocType, ProjField, StartEntry, StartLoc

from conftest import DATA

HEADER = "(data Tree (Leaf Int) (Node Tree Tree))\n"


def read(name):
    return (DATA / name).read_text(encoding="utf-8")


def test_buildtree():
    program = parse_socal(read("buildtree.socal"))
    assert program.schema.datatype("Tree").layout is Layout.FACTORED
    assert [c.name for c in program.schema.datatype("Tree").constructors] == ["Leaf", "Node"]
    fn = program.function("buildtree")
    assert fn.loc_params == ("lout",)
    assert fn.params == (("n", INT_T),)
    assert fn.result == LocType("Tree", "lout")
    assert fn.body.locexpr.loc == "lout"
    assert fn.body.body.locexpr == ProjField("Leaf", 0, "lout")

    main = program.main
    assert isinstance(main, LetRegion) and isinstance(main.body, LetRegion)
    start = main.body.body.locexpr
    assert start == StartLoc("rt", (StartEntry("Leaf", 0, StartLoc("rf")),))
    assert isinstance(main.body.body.body, App)


def test_positions_are_kept_but_not_compared():
    program = parse_socal(read("buildtree_flat.socal"))
    assert program.main.pos is not None
    assert program.main.pos[0] > 1


@pytest.mark.parametrize("name", ["buildtree.socal", "buildtree_flat.socal", "sumtree.socal", "double_write.socal"])
def test_printed_programs_parse_back(name):
    program = parse_socal(read(name))
    assert parse_socal(show_program(program)) == program


def test_schema_given_by_the_caller():
    program = parse_socal("(main (letregion r (letloc l (start r) (Leaf l 1))))", parse_schema(
        "data Tree = Leaf Int | Node Tree Tree"))
    assert program.functions == ()
    assert program.main.body.body.args[0].value == 1


@pytest.mark.parametrize("text,line", [
    (HEADER + "(main (letregion r (letloc l (start r) (Leaf l 1)))", 2),
    (HEADER + "(main 1))", 2),
    (HEADER + "(main 1)\n(main 2)", 3),
    (HEADER + "(frobnicate)", 2),
    (HEADER + "(main (letregion r (letloc l (+ l 2) 1)))", 2),
    (HEADER + "(main (let x 1))", 2),
])
def test_syntax_errors_carry_a_position(text, line):
    with pytest.raises(SocalSyntaxError) as info:
        parse_socal(text)
    assert info.value.line == line


def test_program_without_datatypes():
    with pytest.raises(SocalSyntaxError):
        parse_socal("(main 1)")


@pytest.mark.parametrize("body", [
    "(letregion r (letloc l (start q) (Leaf l 1)))",
    "(letregion r (letloc l (start r) (Leaf m 1)))",
    "(letregion r (letloc l (start r) (Bogus l)))",
    "(letregion r (letloc l (start r) (Leaf l x)))",
    "(frob () 1)",
])
def test_unbound_names(body):
    with pytest.raises(UnboundName):
        parse_socal(HEADER + f"(main {body})")


def test_schema_errors_point_at_the_form():
    with pytest.raises(SchemaError) as info:
        parse_socal("(data Tree (Leaf Int))\n(data Tree (Node Int))\n(main 1)")
    assert info.value.line == 2
