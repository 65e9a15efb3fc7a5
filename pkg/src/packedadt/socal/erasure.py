"""Location-erased evaluation: constructors build ordinary values and location forms vanish."""
from packedadt.errors import InvalidArgument, Stuck
from packedadt.layout.values import Value
from packedadt.socal.syntax import (
    App,
    Case,
    DataCon,
    Expr,
    If,
    IntLit,
    Let,
    LetLoc,
    LetRegion,
    Prim,
    SocalProgram,
    Var,
    apply_prim,
)

Erased = int | Value


def _eval(program: SocalProgram, e: Expr, env: dict[str, Erased]) -> Erased:
    while True:
        if isinstance(e, IntLit):
            return e.value
        if isinstance(e, Var):
            return env[e.name]
        if isinstance(e, (LetRegion, LetLoc)):
            e = e.body
        elif isinstance(e, Let):
            env = {**env, e.var: _eval(program, e.rhs, env)}
            e = e.body
        elif isinstance(e, Prim):
            return apply_prim(e.op, _eval(program, e.left, env), _eval(program, e.right, env))
        elif isinstance(e, If):
            e = e.then if _eval(program, e.cond, env) != 0 else e.orelse
        elif isinstance(e, DataCon):
            return Value(e.ctor, tuple(_eval(program, a, env) for a in e.args))
        elif isinstance(e, Case):
            v = env[e.scrutinee]
            branch = next((b for b in e.branches if isinstance(v, Value) and b.ctor == v.constructor), None)
            if branch is None:
                raise Stuck("E-Case", f"no branch matches {v!r:.60}")
            env = {**env, **{b.var: a for b, a in zip(branch.binders, v.args)}}
            e = branch.body
        elif isinstance(e, App):
            fn = program.function(e.fn)
            args = [_eval(program, a, env) for a in e.args]
            env = {var: a for (var, _), a in zip(fn.params, args)}
            e = fn.body
        else:
            raise TypeError(f"not an expression: {e!r}")


def evaluate_erased(program: SocalProgram) -> Erased:
    """
    Evaluate ``main`` with every location, region and ``letloc`` erased.

    A well-typed program must produce, on the store, exactly the value this
    returns; the fuzzer compares the two.
    """
    if program.main is None:
        raise InvalidArgument("the program has no main expression")
    return _eval(program, program.main, {})
