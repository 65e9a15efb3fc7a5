import numpy as np
import pytest

from packedadt.errors import InvalidArgument
from packedadt.layout.values import Value, random_value
from packedadt.schema.adt import Layout
from packedadt.socal.checker import Reason, typecheck
from packedadt.socal.fuzz import (
    FUZZ_SCHEMAS,
    check_program,
    composed_program,
    fuzz_negative_control,
    fuzz_type_safety,
    program_for_value,
    template_program,
)
from packedadt.socal.erasure import evaluate_erased
from packedadt.socal.machine import LocVal, interpret
from packedadt.socal.printer import show_program
from packedadt.socal.syntax import App, Case, DataCon, If, Let, LetLoc, LetRegion, Prim


def leaf(n):
    return Value("Leaf", (n,))


def test_type_safety_smoke():
    summary = fuzz_type_safety(0, 100)
    assert summary.passed == 100
    assert summary.failures == []
    assert sum(summary.kinds.values()) == 100
    assert summary.bridged > 0
    assert summary.steps > 0


def test_type_safety_is_deterministic():
    a, b = fuzz_type_safety(3, 30), fuzz_type_safety(3, 30)
    assert (a.kinds, a.steps, a.bridged) == (b.kinds, b.steps, b.bridged)


@pytest.mark.slow
def test_type_safety_at_scale():
    assert fuzz_type_safety(1, 10_000).passed == 10_000


def test_negative_control_rejects_everything():
    assert fuzz_negative_control(0, 20) == 20


def test_counts_must_be_positive():
    with pytest.raises(InvalidArgument):
        fuzz_type_safety(0, 0)
    with pytest.raises(InvalidArgument):
        fuzz_negative_control(0, 0)


def test_faulty_program_is_rejected_for_its_dependency():
    schema = FUZZ_SCHEMAS[("Tree", Layout.FACTORED)]
    program = program_for_value(schema, "Tree", Value("Node", (leaf(1), leaf(2))), fault="after")
    result = typecheck(program)
    assert not result.accepted
    assert result.rejection.reason is Reason.UNWRITTEN_DEPENDENCY


@pytest.mark.parametrize("layout", [Layout.FLAT, Layout.FACTORED], ids=["flat", "factored"])
def test_constructor_program_passes_every_check(layout):
    value = Value("Node", (Value("Node", (leaf(-3), leaf(4))), leaf(7)))
    program = program_for_value(FUZZ_SCHEMAS[("Tree", layout)], "Tree", value)
    failed, message, run = check_program(program, value, "Tree")
    assert failed is None, message
    assert run.decoded() == value


@pytest.mark.parametrize("datatype", ["Tree", "List"])
@pytest.mark.parametrize("layout", [Layout.FLAT, Layout.FACTORED], ids=["flat", "factored"])
@pytest.mark.parametrize("kind", ["build", "sum", "copy"])
def test_templates(datatype, layout, kind):
    program = template_program(datatype, layout, kind, 3, 5)
    assert typecheck(program).accepted
    failed, message, _ = check_program(program)
    assert failed is None, message


def test_sum_template_result():
    # payloads 5, 8, 11, 14
    flat = interpret(template_program("List", Layout.FLAT, "sum", 4, 5)).decoded()
    factored = interpret(template_program("List", Layout.FACTORED, "sum", 4, 5)).decoded()
    assert flat == factored == 38


def test_unknown_template():
    with pytest.raises(InvalidArgument):
        template_program("Tree", Layout.FLAT, "zip", 2, 0)


def nested_forms(expr):
    """Names of the forms in ``expr`` and whether a case sits inside another case's branch"""
    seen, case_in_case = set(), False
    stack = [(expr, False)]
    while stack:
        e, under_case = stack.pop()
        seen.add(type(e).__name__)
        if isinstance(e, Case):
            case_in_case = case_in_case or under_case
            stack.extend((b.body, True) for b in e.branches)
        elif isinstance(e, Let):
            stack.extend([(e.rhs, under_case), (e.body, under_case)])
        elif isinstance(e, (LetLoc, LetRegion)):
            stack.append((e.body, under_case))
        elif isinstance(e, If):
            stack.extend((x, under_case) for x in (e.cond, e.then, e.orelse))
        elif isinstance(e, Prim):
            stack.extend([(e.left, under_case), (e.right, under_case)])
        elif isinstance(e, (App, DataCon)):
            stack.extend((a, under_case) for a in e.args)
    return seen, case_in_case


def test_composed_programs_cover_the_expression_forms():
    rng = np.random.default_rng(5)
    forms, case_in_case, helpers, kinds = set(), False, 0, set()
    for _ in range(400):
        kind, program = composed_program(rng)
        kinds.add(kind)
        seen, nested = nested_forms(program.main)
        forms |= seen
        case_in_case = case_in_case or nested
        helpers = max(helpers, len(program.functions) - 3)
    assert kinds == {"composed-int", "composed-packed"}
    assert {"Let", "LetRegion", "LetLoc", "If", "Case", "App", "DataCon", "Prim"} <= forms
    assert case_in_case
    assert helpers == 2


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_composed_programs_pass_every_check(seed):
    rng = np.random.default_rng(seed)
    for _ in range(40):
        kind, program = composed_program(rng)
        failed, message, run = check_program(program)
        assert failed is None, f"{kind}: {message}\n{show_program(program)}"
        assert run.decoded() == evaluate_erased(program)


def test_type_safety_mixes_program_kinds():
    summary = fuzz_type_safety(4, 200)
    assert {"value", "composed-int", "composed-packed"} <= set(summary.kinds)
    assert {"build", "sum", "copy"} & set(summary.kinds)


@pytest.mark.slow
def test_constructor_programs_match_serialize_at_scale():
    rng = np.random.default_rng(21)
    bridged = 0
    for i in range(1000):
        datatype, layout = list(FUZZ_SCHEMAS)[i % 4]
        schema = FUZZ_SCHEMAS[(datatype, layout)]
        value = random_value(schema, datatype, rng, max_nodes=24, max_depth=8, int_range=(-50, 50))
        failed, message, run = check_program(program_for_value(schema, datatype, value), value, datatype)
        assert failed is None, message
        bridged += isinstance(run.value, LocVal)
    assert bridged == 1000
