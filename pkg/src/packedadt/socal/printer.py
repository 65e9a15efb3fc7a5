from packedadt.schema.adt import AdtSchema
from packedadt.socal.syntax import (
    AfterLoc,
    App,
    Case,
    DataCon,
    Expr,
    FunDef,
    If,
    IntLit,
    IntroLocVec,
    Let,
    LetLoc,
    LetRegion,
    LocExpr,
    PlusOne,
    Prim,
    ProjField,
    ProjTag,
    SocalProgram,
    StartLoc,
    Type,
    Var,
)


def show_type(t: Type) -> str:
    return str(t)


def _start(s: StartLoc) -> str:
    if not s.factored:
        return s.region
    inner = " ".join(f"({e.ctor} {e.index} {_start(e.target)})" for e in s.entries)
    suffix = f" {s.datatype}" if s.datatype else ""
    return f"({s.region} ({inner}){suffix})"


def show_locexpr(le: LocExpr) -> str:
    if isinstance(le, StartLoc):
        if not le.factored:
            return f"(start {le.region})"
        return "(start " + _start(le)[1:]
    if isinstance(le, PlusOne):
        return f"(+ {le.loc} 1)"
    if isinstance(le, AfterLoc):
        return f"(after {le.datatype} {le.loc})"
    if isinstance(le, ProjTag):
        return f"(projTagLoc {le.loc})"
    if isinstance(le, ProjField):
        return f"(projFieldLoc {le.ctor} {le.index} {le.loc})"
    if isinstance(le, IntroLocVec):
        inner = " ".join(f"({k} {j} {l})" for k, j, l in le.entries)
        suffix = f" {le.datatype}" if le.datatype else ""
        return f"(introLocVec {le.tag} ({inner}){suffix})"
    raise TypeError(f"not a location expression: {le!r}")


def head(e: Expr) -> str:
    """One-line rendering of ``e`` without its body, for traces"""
    if isinstance(e, Let):
        return f"let {e.var} = {head(e.rhs)}"
    if isinstance(e, LetRegion):
        return f"letregion {e.region}"
    if isinstance(e, LetLoc):
        return f"letloc {e.loc} = {show_locexpr(e.locexpr)}"
    if isinstance(e, Case):
        return f"case {e.scrutinee}"
    if isinstance(e, If):
        return f"if {head(e.cond)}"
    return show_expr(e)


def show_expr(e: Expr, indent: int = 0) -> str:
    pad = "\n" + " " * (indent + 2)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, Prim):
        return f"({e.op} {show_expr(e.left, indent)} {show_expr(e.right, indent)})"
    if isinstance(e, DataCon):
        return " ".join(["(" + e.ctor, e.loc, *(show_expr(a) for a in e.args)]) + ")"
    if isinstance(e, App):
        args = "".join(" " + show_expr(a, indent) for a in e.args)
        return f"({e.fn} ({' '.join(e.locs)}){args})"
    if isinstance(e, Let):
        return f"(let {e.var} {show_expr(e.rhs, indent + 2)}{pad}{show_expr(e.body, indent + 2)})"
    if isinstance(e, LetRegion):
        return f"(letregion {e.region}{pad}{show_expr(e.body, indent + 2)})"
    if isinstance(e, LetLoc):
        return f"(letloc {e.loc} {show_locexpr(e.locexpr)}{pad}{show_expr(e.body, indent + 2)})"
    if isinstance(e, If):
        parts = [show_expr(x, indent + 2) for x in (e.cond, e.then, e.orelse)]
        return f"(if {parts[0]}{pad}{parts[1]}{pad}{parts[2]})"
    if isinstance(e, Case):
        branches = []
        for b in e.branches:
            binders = "".join(f" ({x.var} {x.loc})" if x.loc else f" {x.var}" for x in b.binders)
            branches.append(f"(({b.ctor}{binders}){pad}  {show_expr(b.body, indent + 4)})")
        return f"(case {e.scrutinee}{pad}" + pad.join(branches) + ")"
    raise TypeError(f"not an expression: {e!r}")


def show_schema(schema: AdtSchema) -> str:
    lines = []
    for dt in schema.datatypes:
        alternatives = " ".join(
            "(" + " ".join([c.name, *(str(f) for f in c.fields)]) + ")" for c in dt.constructors
        )
        lines.append(f"(data {dt.name} {alternatives})")
        lines.append(f"(layout {dt.name} {dt.layout.keyword()})")
    return "\n".join(lines)


def show_function(fn: FunDef) -> str:
    params = " ".join(f"({x} {show_type(t)})" for x, t in fn.params)
    return (
        f"(define ({' '.join([fn.name, *fn.loc_params])}) ({params}) {show_type(fn.result)}\n"
        f"  {show_expr(fn.body, 2)})"
    )


def show_program(program: SocalProgram) -> str:
    """Source text that parses back to ``program``"""
    parts = [show_schema(program.schema)]
    parts.extend(show_function(fn) for fn in program.functions)
    if program.main is not None:
        parts.append(f"(main\n  {show_expr(program.main, 2)})")
    return "\n\n".join(parts) + "\n"
