from collections import Counter

import pytest

from packedadt.errors import TypecheckFailed
from packedadt.socal.checker import typecheck
from packedadt.socal.envs import After, Bump, FieldOf, Intro, Reason, Start, TagOf
from packedadt.socal.parser import parse_socal

from conftest import DATA

FLAT = "(data Tree (Leaf Int) (Node Tree Tree))\n"
FACTORED = FLAT + "(layout Tree Factored)\n"


def check(name):
    return typecheck(parse_socal((DATA / name).read_text(encoding="utf-8")))


def rejection(text):
    result = typecheck(parse_socal(text))
    assert not result.accepted
    return result.rejection


@pytest.mark.parametrize("name", ["buildtree.socal", "buildtree_flat.socal", "sumtree.socal"])
def test_accepts_the_examples(name):
    result = check(name)
    assert result.accepted, result.rejection
    assert result.require() is result


def test_buildtree_constraints():
    c = check("buildtree.socal").constraints
    kinds = Counter(type(x).__name__ for x in c.values())
    assert kinds == {"Start": 1, "Bump": 1, "Intro": 1, "After": 1, "TagOf": 1, "FieldOf": 1}
    assert set(c["l"].regions) == {"rt", "rf"}
    assert isinstance(c["l"], Start)
    assert c["lout.tag"] == TagOf("lout")
    assert c["lout.Leaf.0"] == FieldOf("Leaf", 0, "lout")
    assert c["lda"] == Bump("lout.tag")
    assert c["la"] == Intro("lda", (("Leaf", 0, "lout.Leaf.0"),))
    assert c["lb"] == After("Tree", "la")


def test_trace_entries():
    result = check("buildtree.socal")
    rules = [entry.rule for entry in result.trace]
    assert rules[0] == "T-Fun"
    assert "T-LetLoc-IntroLocVec" in rules
    assert "T-DataConstructor-FullyFactored" in rules
    entry = next(e for e in result.trace if e.rule == "T-LetLoc-After")
    payload = entry.to_json()
    assert set(payload) == {"rule", "e", "A", "N", "C_delta"}
    assert payload["C_delta"] == {"lb": "after(Tree@la)"}
    assert "lb" in payload["N"]


def test_double_write():
    r = check("double_write.socal").rejection
    assert r.reason is Reason.WRITE_TO_WRITTEN
    assert r.rule == "T-DataConstructor"
    assert r.location is not None
    assert r.function is None
    with pytest.raises(TypecheckFailed, match="WriteToWrittenLocation"):
        check("double_write.socal").require()


def test_after_on_an_unwritten_location():
    r = rejection(FLAT + "(main (letregion r (letloc l (start r) (letloc m (after Tree l) (Leaf l 1)))))")
    assert r.reason is Reason.UNWRITTEN_DEPENDENCY
    assert r.rule == "T-LetLoc-After"


def test_allocated_but_never_written():
    r = rejection(FLAT + "(main (letregion r (letloc l (start r) 1)))")
    assert r.reason is Reason.OUTPUT_NOT_WRITTEN
    assert r.rule == "T-Program"


def test_bad_projection_key():
    r = rejection(FACTORED + """
(main (letregion rt (letregion rf
  (letloc l (start rt ((Leaf 0 rf)))
    (letloc x (projFieldLoc Leaf 1 l) (Leaf l 1))))))
""")
    assert r.reason is Reason.BAD_PROJECTION_KEY
    assert r.rule == "T-LetLoc-ProjField"


def test_self_field_cannot_be_projected():
    r = rejection(FACTORED + """
(main (letregion rt (letregion rf
  (letloc l (start rt ((Leaf 0 rf)))
    (letloc x (projFieldLoc Node 0 l) (Leaf l 1))))))
""")
    assert r.reason is Reason.SELF_FIELD_IN_VECTOR


def test_factored_constructor_needs_projections():
    r = rejection(FACTORED + """
(main (letregion rt (letregion rf
  (letloc l (start rt ((Leaf 0 rf)))
    (Leaf l 1)))))
""")
    assert r.reason is Reason.WRITE_NOT_AT_FOCUS
    assert r.rule == "T-DataConstructor-FullyFactored"


def test_missing_branch_and_function_name():
    r = rejection(FLAT + """
(define (f lin) ((t (Tree lin))) Int
  (case t ((Leaf v) v)))
""")
    assert r.reason is Reason.MISSING_BRANCH
    assert r.function == "f"


def test_branches_must_agree():
    r = rejection(FLAT + """
(define (g lout) ((n Int)) (Tree lout)
  (if n (Leaf lout 1)
    (letloc la (+ lout 1) (Leaf la 2))))
""")
    assert r.reason is Reason.BRANCH_MISMATCH
    assert r.rule == "T-If"


def test_arity_mismatch():
    r = rejection(FLAT + "(main (letregion r (letloc l (start r) (Leaf l 1 2))))")
    assert r.reason is Reason.ARITY_MISMATCH
