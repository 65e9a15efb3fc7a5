from dataclasses import dataclass

from packedadt.errors import IllFormedStore
from packedadt.socal.envs import (
    INT_TYPE,
    After,
    Bump,
    FieldOf,
    Intro,
    Start,
    StaticEnvs,
    TagOf,
)
from packedadt.socal.store import CFact, CLoc, Concrete, RuntimeState, concrete_leaves, end_witness


@dataclass(init=True, repr=True, eq=True, frozen=True, slots=True)
class WellFormedReport:
    ok: bool
    clause: str | None = None
    location: str | None = None
    detail: str = ""

    def __str__(self) -> str:
        if self.ok:
            return "PASS"
        return f"FAIL {self.clause} at {self.location}: {self.detail}"

    def to_json(self) -> dict:
        return {"ok": self.ok, "clause": self.clause, "location": self.location, "detail": self.detail}


PASS = WellFormedReport(True)


class _Failed(Exception):
    def __init__(self, report: WellFormedReport):
        self.report = report


def _fail(clause: str, location: str, detail: str) -> _Failed:
    return _Failed(WellFormedReport(False, clause, location, detail))


def _in_region(root: Concrete, region: str) -> CLoc | None:
    found = [c for c in concrete_leaves(root) if c.region == region]
    return max(found, key=lambda c: c.index) if found else None


class WellFormedMonitor:
    """
    Checks a (static environments, runtime state) pair step after step.

    Typed roots and constraints are verified once, when they first appear:
    the location map never rebinds an id and a cell written twice fails the
    write-once clause before anything else is looked at.
    """
    __slots__ = ["roots", "realized"]

    def __init__(self):
        self.roots: set[str] = set()
        self.realized: set[str] = set()

    def check(self, envs: StaticEnvs, state: RuntimeState) -> WellFormedReport:
        try:
            self._write_once(state)
            self._disjoint(envs)
            self._roots(envs, state)
            self._constraints(envs, state)
            self._nursery(envs, state)
            self._allocation(envs, state)
        except _Failed as f:
            return f.report
        return PASS

    def _write_once(self, state: RuntimeState) -> None:
        if state.overwritten:
            at = state.overwritten[0]
            raise _fail("write-once", str(at), f"cell written {state.writes[(at.region, at.index)]} times")

    def _disjoint(self, envs: StaticEnvs) -> None:
        for loc in sorted(envs.nursery):
            if loc in envs.sigma:
                raise _fail("disjoint", loc, "location is both written and in the nursery")

    def _roots(self, envs: StaticEnvs, state: RuntimeState) -> None:
        for loc, t in envs.sigma.items():
            if loc in self.roots:
                continue
            if loc not in state.locmap:
                raise _fail("root", loc, "written location is not mapped")
            try:
                end_witness(state, t, state.locmap[loc])
            except IllFormedStore as e:
                raise _fail("root", loc, f"no end witness for {t}: {e}") from None
            self.roots.add(loc)

    def _constraints(self, envs: StaticEnvs, state: RuntimeState) -> None:
        m = state.locmap
        for loc, c in envs.constraints.items():
            if loc in self.realized:
                continue
            if loc not in m:
                raise _fail("mapped", loc, f"constrained by {c} but not mapped")
            here = m[loc]
            if isinstance(c, Start):
                if any(leaf.index != 0 for leaf in concrete_leaves(here)):
                    raise _fail("start", loc, f"{here} does not start its regions")
            elif isinstance(c, Bump):
                base = m.get(c.loc)
                if not isinstance(base, CLoc) or here != base.bumped():
                    raise _fail("bump", loc, f"{here} is not {base} + 1")
            elif isinstance(c, After):
                try:
                    want = end_witness(state, c.datatype, m[c.loc])
                except (IllFormedStore, KeyError) as e:
                    raise _fail("after", loc, f"{c.loc} has no end witness: {e}") from None
                if here != want:
                    raise _fail("after", loc, f"{here} is not the end of {c.datatype} at {c.loc} ({want})")
            elif isinstance(c, TagOf):
                base = m.get(c.loc)
                if not isinstance(base, CFact) or here != base.tag:
                    raise _fail("proj-tag", loc, f"{here} is not the tag component of {c.loc}")
            elif isinstance(c, FieldOf):
                base = m.get(c.loc)
                if not isinstance(base, CFact) or here != base.entry(c.ctor, c.index):
                    raise _fail("proj-field", loc, f"{here} is not component ({c.ctor},{c.index}) of {c.loc}")
            elif isinstance(c, Intro):
                try:
                    want = CFact(m[c.tag], tuple((k, j, m[x]) for k, j, x in c.entries))
                except KeyError as e:
                    raise _fail("intro", loc, f"component {e} is not mapped") from None
                if here != want:
                    raise _fail("intro", loc, f"{here} is not the vector {want}")
            self.realized.add(loc)

    def _nursery(self, envs: StaticEnvs, state: RuntimeState) -> None:
        for loc in sorted(envs.nursery):
            here = state.locmap.get(loc)
            if here is None:
                raise _fail("nursery", loc, "allocated location is not mapped")
            first = here if isinstance(here, CLoc) else _tag_leaf(here)
            if state.written(first):
                raise _fail("nursery", loc, f"cell {first} is already written")

    def _allocation(self, envs: StaticEnvs, state: RuntimeState) -> None:
        for region, loc in envs.focus.items():
            highest = state.highest_written(region)
            if loc is None:
                if highest >= 0:
                    raise _fail("empty-region", region, f"no focus but cells up to {highest} are written")
                continue
            here = state.locmap.get(loc)
            if here is None:
                raise _fail("mapped", loc, f"focus of {region} is not mapped")
            if loc in envs.nursery:
                at = _in_region(here, region)
                if at is not None and at.index <= highest:
                    raise _fail("frontier", loc, f"{at} is not past the last written cell {region}[{highest}]")
            elif loc in envs.sigma:
                t = envs.sigma[loc]
                end = end_witness(state, t, here) if t != INT_TYPE else here.bumped()
                at = _in_region(end, region)
                if at is not None and at.index < highest + 1:
                    raise _fail("finished", loc, f"end {at} lies before the frontier {region}[{highest + 1}]")


def _tag_leaf(root: CFact) -> CLoc:
    tag = root.tag
    while isinstance(tag, CFact):
        tag = tag.tag
    return tag


def check_well_formed(envs: StaticEnvs, state: RuntimeState) -> WellFormedReport:
    """
    Check the store well-formedness judgement for ``envs`` against ``state``.

    Clauses, in the order they are checked: ``write-once`` (no cell written
    twice), ``disjoint`` (written roots and nursery share nothing), ``root``
    (every written location is mapped and has an end witness), the constraint
    clauses ``mapped``, ``start``, ``bump``, ``after``, ``proj-tag``,
    ``proj-field`` and ``intro`` (the location map realizes C), ``nursery``
    (allocated locations are mapped and unwritten) and the allocation clauses
    ``empty-region``, ``frontier`` and ``finished``.

    :return: PASS, or the first violated clause with the offending location
    """
    return WellFormedMonitor().check(envs, state)
