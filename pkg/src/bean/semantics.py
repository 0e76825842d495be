"""Triple semantics: ideal evaluation, binary64 evaluation, backward maps.

A derivation is evaluated big-step in two worlds that share one recursion:
``eval_approx`` uses native binary64 ops, ``eval_ideal`` uses MPFR at the
configured ideal precision. ``dmul`` evaluates as multiplication and ``!e``
as the identity in both.

``backward_eval`` runs the derivation-directed backward map: given the
original (approximate) environment and a target output at finite distance
from the approximate result, it constructs an ideal-precision environment on
which the ideal evaluator reproduces the target exactly (up to the ideal
rounding of the backward map itself, budgeted well under 2^-200). Let-style
nodes compose backward maps (the bound expression's approximate value is
recomputed to feed the body's map), case nodes route by the approximate
injection tag, and the arithmetic leaves apply closed forms:

    add/sub:  scale both operands by target/result
    mul:      scale both operands by sqrt(target/result)
    div:      scale numerator by s and denominator by 1/s, s = sqrt ratio
    dmul:     discrete operand unchanged, linear operand gets target/z

Discrete inputs are never perturbed; the linear perturbations land within
the grades inferred by the type checker, which is exactly what the harness
verifies by rerunning the ideal evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import gmpy2

from bean.errors import BackwardDomainError, EvalError, InputShapeError
from bean.numerics import (
    DIV_BY_ZERO,
    IdealContext,
    RoundingConfig,
    approx_op,
    is_subnormal,
    rp_distance,
)
from bean.syntax import ast
from bean.syntax.ast import Ty
from bean.typecheck import Derivation

_LET_RULES = ("Let", "LetPair", "DLet", "DLetPair")


# ---------------------------------------------------------------------------
# Values and environments
# ---------------------------------------------------------------------------

class Value:
    __slots__ = ()


@dataclass(frozen=True)
class NumA(Value):
    """Approximate (binary64) number."""

    val: float


@dataclass(frozen=True, eq=False)
class NumI(Value):
    """Ideal (MPFR) number; equality is exact numeric equality."""

    val: object

    def __eq__(self, other):
        return isinstance(other, NumI) and self.val == other.val

    def __hash__(self):
        return hash(float(self.val))


@dataclass(frozen=True)
class UnitV(Value):
    pass


@dataclass(frozen=True)
class PairV(Value):
    fst: Value
    snd: Value


@dataclass(frozen=True)
class InlV(Value):
    val: Value


@dataclass(frozen=True)
class InrV(Value):
    val: Value


UNIT_V = UnitV()


@dataclass
class Env:
    disc: dict[str, Value] = field(default_factory=dict)
    lin: dict[str, Value] = field(default_factory=dict)

    def copy(self) -> "Env":
        return Env(dict(self.disc), dict(self.lin))


def num_of(v: Value):
    match v:
        case NumA(x) | NumI(x):
            return x
    raise EvalError(f"expected a number, found {v!r}")


def value_to_ideal(v: Value, ictx: IdealContext) -> Value:
    match v:
        case NumA(x):
            return NumI(ictx.make(x))
        case NumI(_) | UnitV():
            return v
        case PairV(a, b):
            return PairV(value_to_ideal(a, ictx), value_to_ideal(b, ictx))
        case InlV(a):
            return InlV(value_to_ideal(a, ictx))
        case InrV(a):
            return InrV(value_to_ideal(a, ictx))
    raise EvalError(f"not a value: {v!r}")


def env_to_ideal(env: Env, ictx: IdealContext) -> Env:
    return Env(
        {n: value_to_ideal(v, ictx) for n, v in env.disc.items()},
        {n: value_to_ideal(v, ictx) for n, v in env.lin.items()},
    )


# ---------------------------------------------------------------------------
# Forward evaluation (shared recursion, two arithmetic worlds)
# ---------------------------------------------------------------------------

@dataclass
class TrialFlags:
    """Side-channel facts about one approximate run."""

    underflow: bool = False


class _ApproxArith:
    ideal = False

    def __init__(self, flags: TrialFlags | None):
        self.flags = flags

    def op(self, name: str, a: Value, b: Value) -> Value:
        x, y = num_of(a), num_of(b)
        r = approx_op(name, x, y)
        if r is DIV_BY_ZERO:
            return InrV(UNIT_V)
        if self.flags is not None:
            # gradual underflow, or a product/quotient flushed all the way
            # to zero; either way the rounding model's guarantee is void
            flushed = (r == 0.0 and x != 0.0
                       and (name == "div" or (name == "mul" and y != 0.0)))
            if is_subnormal(r) or flushed:
                self.flags.underflow = True
        return InlV(NumA(r)) if name == "div" else NumA(r)


class _IdealArith:
    ideal = True

    def __init__(self, ictx: IdealContext):
        self.ictx = ictx

    def op(self, name: str, a: Value, b: Value) -> Value:
        ic = self.ictx
        x, y = ic.make(num_of(a)), ic.make(num_of(b))
        if name == "add":
            return NumI(ic.add(x, y))
        if name == "sub":
            return NumI(ic.sub(x, y))
        if name == "mul":
            return NumI(ic.mul(x, y))
        if y == 0:
            return InrV(UNIT_V)
        return InlV(NumI(ic.div(x, y)))


def eval_approx(deriv: Derivation, env: Env, flags: TrialFlags | None = None) -> Value:
    """Big-step binary64 evaluation; deterministic; div-by-zero yields inr ()."""
    return _eval(deriv, env.copy(), _ApproxArith(flags))


def eval_ideal(deriv: Derivation, env: Env, cfg: RoundingConfig) -> Value:
    """Big-step evaluation at the ideal precision of ``cfg``."""
    ictx = IdealContext(cfg)
    return _eval(deriv, env_to_ideal(env, ictx), _IdealArith(ictx))


def _eval(deriv: Derivation, env: Env, arith) -> Value:
    bindings: list[tuple[str, str]] = []  # (kind, name) undo log
    d = deriv
    while d.rule in _LET_RULES:
        bound_d, body_d = d.children
        v = _eval(bound_d, env, arith)
        e = d.expr
        if d.rule == "Let":
            env.lin[e.var] = v
            bindings.append(("lin", e.var))
        elif d.rule == "DLet":
            env.disc[e.var] = v
            bindings.append(("disc", e.var))
        else:
            match v:
                case PairV(a, b):
                    pass
                case _:
                    raise EvalError("pattern match on a non-pair value")
            if d.rule == "LetPair":
                env.lin[e.var1], env.lin[e.var2] = a, b
                bindings.append(("lin", e.var1))
                bindings.append(("lin", e.var2))
            else:
                env.disc[e.var1], env.disc[e.var2] = a, b
                bindings.append(("disc", e.var1))
                bindings.append(("disc", e.var2))
        d = body_d
    result = _eval_tail(d, env, arith)
    for kind, name in bindings:
        (env.lin if kind == "lin" else env.disc).pop(name, None)
    return result


def _eval_tail(d: Derivation, env: Env, arith) -> Value:
    e = d.expr
    match d.rule:
        case "Var":
            return env.lin[e.name]
        case "DVar":
            return env.disc[e.name]
        case "Unit":
            return UNIT_V
        case "Disc":
            return _eval(d.children[0], env, arith)
        case "Pair":
            return PairV(_eval(d.children[0], env, arith),
                         _eval(d.children[1], env, arith))
        case "Inl":
            return InlV(_eval(d.children[0], env, arith))
        case "Inr":
            return InrV(_eval(d.children[0], env, arith))
        case "Case":
            scrut = _eval(d.children[0], env, arith)
            match scrut:
                case InlV(v):
                    env.lin[e.lvar] = v
                    out = _eval(d.children[1], env, arith)
                    env.lin.pop(e.lvar, None)
                    return out
                case InrV(v):
                    env.lin[e.rvar] = v
                    out = _eval(d.children[2], env, arith)
                    env.lin.pop(e.rvar, None)
                    return out
            raise EvalError("case scrutinee is not an injection")
        case "Add":
            return arith.op("add", env.lin[e.x.name], env.lin[e.y.name])
        case "Sub":
            return arith.op("sub", env.lin[e.x.name], env.lin[e.y.name])
        case "Mul":
            return arith.op("mul", env.lin[e.x.name], env.lin[e.y.name])
        case "Div":
            return arith.op("div", env.lin[e.x.name], env.lin[e.y.name])
        case "DMul":
            return arith.op("mul", env.disc[e.z.name], env.lin[e.x.name])
        case _:
            raise EvalError(f"cannot evaluate rule {d.rule!r}")


# ---------------------------------------------------------------------------
# Primitive backward maps (ideal precision)
# ---------------------------------------------------------------------------

def _same_sign(a, b) -> bool:
    return gmpy2.sign(a) == gmpy2.sign(b) != 0


def backward_add(ic: IdealContext, x1, x2, x3):
    """Scale both operands so their exact sum is the target."""
    x1, x2, x3 = ic.make(x1), ic.make(x2), ic.make(x3)
    s = ic.add(x1, x2)
    if s == 0 and x3 == 0:
        return x1, x2
    if not _same_sign(s, x3):
        raise BackwardDomainError("add target at infinite distance")
    t = ic.div(x3, s)
    return ic.mul(x1, t), ic.mul(x2, t)


def backward_sub(ic: IdealContext, x1, x2, x3):
    x1, x2, x3 = ic.make(x1), ic.make(x2), ic.make(x3)
    s = ic.sub(x1, x2)
    if s == 0 and x3 == 0:
        return x1, x2
    if not _same_sign(s, x3):
        raise BackwardDomainError("sub target at infinite distance")
    t = ic.div(x3, s)
    return ic.mul(x1, t), ic.mul(x2, t)


def backward_mul(ic: IdealContext, x1, x2, x3):
    """Symmetric square-root split of the correction factor."""
    x1, x2, x3 = ic.make(x1), ic.make(x2), ic.make(x3)
    p = ic.mul(x1, x2)
    if p == 0 and x3 == 0:
        return x1, x2
    if not _same_sign(p, x3):
        raise BackwardDomainError("mul target at infinite distance")
    s = ic.sqrt(ic.div(x3, p))
    return ic.mul(x1, s), ic.mul(x2, s)


def backward_dmul(ic: IdealContext, z, x2, x3):
    """One-sided split: the discrete operand is returned unchanged."""
    z, x2, x3 = ic.make(z), ic.make(x2), ic.make(x3)
    p = ic.mul(z, x2)
    if p == 0 and x3 == 0:
        return z, x2
    if not _same_sign(p, x3):
        raise BackwardDomainError("dmul target at infinite distance")
    return z, ic.div(x3, z)


def backward_div(ic: IdealContext, x1, x2, target):
    """Target is a sum value: ('inl', x3) or ('inr',).

    On the inl branch the scale factor s = sqrt(x3*x2/x1) multiplies the
    numerator and divides the denominator, so the exact quotient is x3 with
    the correct sign; for positive operands this is the familiar pair
    (sqrt(x1*x2*x3), sqrt(x1*x2/x3)).
    """
    x1, x2 = ic.make(x1), ic.make(x2)
    if target[0] == "inr":
        return x1, x2
    x3 = ic.make(target[1])
    if x3 == 0:
        return x1, x2
    if x2 == 0:
        raise BackwardDomainError("div target tag mismatch")
    if not _same_sign(ic.div(x1, x2), x3):
        raise BackwardDomainError("div target at infinite distance")
    s = ic.sqrt(ic.div(ic.mul(x3, x2), x1))
    return ic.mul(x1, s), ic.div(x2, s)


def primitive_backward(op: str, inputs, target, ic: IdealContext):
    """Generic entry point over {add, sub, mul, div, dmul}."""
    x1, x2 = inputs
    if op == "add":
        return backward_add(ic, x1, x2, target)
    if op == "sub":
        return backward_sub(ic, x1, x2, target)
    if op == "mul":
        return backward_mul(ic, x1, x2, target)
    if op == "dmul":
        return backward_dmul(ic, x1, x2, target)
    if op == "div":
        return backward_div(ic, x1, x2, target)
    raise ValueError(f"unknown operation {op!r}")


sub_backward = backward_sub  # operation-level alias


# ---------------------------------------------------------------------------
# Derivation-directed backward evaluation
# ---------------------------------------------------------------------------

def backward_eval(deriv: Derivation, env: Env, target: Value,
                  cfg: RoundingConfig) -> Env:
    """Construct the ideal-precision input witnessing the target output.

    ``env`` holds the original binary64 inputs; ``target`` must be at finite
    output distance from ``eval_approx(deriv, env)`` (the harness passes the
    approximate output itself). Discrete inputs come back unchanged.
    """
    ictx = IdealContext(cfg)
    work = env.copy()
    perturbed = _bwd(deriv, work, target, ictx)
    out = env_to_ideal(env, ictx)
    for name, val in perturbed.items():
        out.lin[name] = value_to_ideal(val, ictx)
    return out


def _bwd(deriv: Derivation, env: Env, target: Value,
         ictx: IdealContext) -> dict[str, Value]:
    """Returns perturbations for the linear variables used by ``deriv``.

    ``env`` is mutated as a scratch scope (bindings are pushed walking down
    the let-spine and popped walking back up) and is restored on exit.
    """
    arith = _ApproxArith(None)
    spine: list[tuple[Derivation, Value]] = []
    d = deriv
    while d.rule in _LET_RULES:
        bound_d, body_d = d.children
        v = _eval(bound_d, env, arith)
        e = d.expr
        if d.rule == "Let":
            env.lin[e.var] = v
        elif d.rule == "DLet":
            env.disc[e.var] = v
        elif d.rule == "LetPair":
            env.lin[e.var1], env.lin[e.var2] = v.fst, v.snd
        else:
            env.disc[e.var1], env.disc[e.var2] = v.fst, v.snd
        spine.append((d, v))
        d = body_d

    pert = _bwd_tail(d, env, target, ictx)

    for node, v in reversed(spine):
        e = node.expr
        bound_d = node.children[0]
        if node.rule == "Let":
            env.lin.pop(e.var, None)
            sub_target = pert.pop(e.var, v)
        elif node.rule == "DLet":
            env.disc.pop(e.var, None)
            sub_target = v  # discrete binding: ideal must reproduce it
        elif node.rule == "LetPair":
            env.lin.pop(e.var1, None)
            env.lin.pop(e.var2, None)
            sub_target = PairV(pert.pop(e.var1, v.fst), pert.pop(e.var2, v.snd))
        else:
            env.disc.pop(e.var1, None)
            env.disc.pop(e.var2, None)
            sub_target = v
        sub = _bwd(bound_d, env, sub_target, ictx)
        for n, val in sub.items():
            if n in pert:
                raise EvalError(f"backward map produced {n!r} twice")
            pert[n] = val
    return pert


def _bwd_tail(d: Derivation, env: Env, target: Value,
              ictx: IdealContext) -> dict[str, Value]:
    e = d.expr
    match d.rule:
        case "Var":
            return {e.name: target}
        case "DVar" | "Unit":
            return {}
        case "Disc":
            return _bwd(d.children[0], env, target, ictx)
        case "Pair":
            match target:
                case PairV(t1, t2):
                    pass
                case _:
                    raise BackwardDomainError("pair target is not a pair")
            p1 = _bwd(d.children[0], env, t1, ictx)
            p2 = _bwd(d.children[1], env, t2, ictx)
            p1.update(p2)  # domains disjoint by linearity
            return p1
        case "Inl":
            match target:
                case InlV(t):
                    return _bwd(d.children[0], env, t, ictx)
                case _:
                    return {}  # mismatched tag: inputs unchanged
        case "Inr":
            match target:
                case InrV(t):
                    return _bwd(d.children[0], env, t, ictx)
                case _:
                    return {}
        case "Case":
            scrut = _eval(d.children[0], env, _ApproxArith(None))
            if isinstance(scrut, InlV):
                env.lin[e.lvar] = scrut.val
                pert = _bwd(d.children[1], env, target, ictx)
                env.lin.pop(e.lvar, None)
                branch_target: Value = InlV(pert.pop(e.lvar, scrut.val))
            elif isinstance(scrut, InrV):
                env.lin[e.rvar] = scrut.val
                pert = _bwd(d.children[2], env, target, ictx)
                env.lin.pop(e.rvar, None)
                branch_target = InrV(pert.pop(e.rvar, scrut.val))
            else:
                raise EvalError("case scrutinee is not an injection")
            sub = _bwd(d.children[0], env, branch_target, ictx)
            for n, val in sub.items():
                if n in pert:
                    raise EvalError(f"backward map produced {n!r} twice")
                pert[n] = val
            return pert
        case "Add" | "Sub" | "Mul":
            x1 = num_of(env.lin[e.x.name])
            x2 = num_of(env.lin[e.y.name])
            x3 = num_of(target)
            fn = {"Add": backward_add, "Sub": backward_sub,
                  "Mul": backward_mul}[d.rule]
            b1, b2 = fn(ictx, x1, x2, x3)
            return {e.x.name: NumI(b1), e.y.name: NumI(b2)}
        case "DMul":
            z = num_of(env.disc[e.z.name])
            x2 = num_of(env.lin[e.x.name])
            x3 = num_of(target)
            _, b2 = backward_dmul(ictx, z, x2, x3)
            return {e.x.name: NumI(b2)}
        case "Div":
            x1 = num_of(env.lin[e.x.name])
            x2 = num_of(env.lin[e.y.name])
            match target:
                case InlV(t):
                    tgt = ("inl", num_of(t))
                case InrV(_):
                    tgt = ("inr",)
                case _:
                    raise BackwardDomainError("div target is not a sum value")
            b1, b2 = backward_div(ictx, x1, x2, tgt)
            return {e.x.name: NumI(b1), e.y.name: NumI(b2)}
        case _:
            raise EvalError(f"cannot run backward rule {d.rule!r}")


# ---------------------------------------------------------------------------
# Distances between environments / values
# ---------------------------------------------------------------------------

@dataclass
class DistanceReport:
    lin: dict[str, object]          # name -> mpfr distance (may be inf)
    disc_changed: dict[str, bool]   # name -> True when not bit-identical


def value_distance(a: Value, b: Value, ictx: IdealContext):
    """Componentwise rp distance folded with max; infinite across tags."""
    match (a, b):
        case (NumA(_) | NumI(_), NumA(_) | NumI(_)):
            return rp_distance(num_of(a), num_of(b), ictx)
        case (UnitV(), UnitV()):
            return ictx.make(0.0)
        case (PairV(a1, a2), PairV(b1, b2)):
            return max(value_distance(a1, b1, ictx), value_distance(a2, b2, ictx))
        case (InlV(x), InlV(y)) | (InrV(x), InrV(y)):
            return value_distance(x, y, ictx)
        case _:
            from bean.numerics import INF
            return INF


def values_identical(a: Value, b: Value) -> bool:
    match (a, b):
        case (NumA(_) | NumI(_), NumA(_) | NumI(_)):
            return num_of(a) == num_of(b)
        case (UnitV(), UnitV()):
            return True
        case (PairV(a1, a2), PairV(b1, b2)):
            return values_identical(a1, b1) and values_identical(a2, b2)
        case (InlV(x), InlV(y)) | (InrV(x), InrV(y)):
            return values_identical(x, y)
        case _:
            return False


def distances(env: Env, perturbed: Env, cfg: RoundingConfig) -> DistanceReport:
    """Per-variable distances between an input and its perturbed witness."""
    ictx = IdealContext(cfg)
    lin = {n: value_distance(v, perturbed.lin[n], ictx)
           for n, v in env.lin.items()}
    disc = {n: not values_identical(v, perturbed.disc[n])
            for n, v in env.disc.items()}
    return DistanceReport(lin, disc)


# ---------------------------------------------------------------------------
# JSON-ish serialization of values
# ---------------------------------------------------------------------------

def value_to_json(v: Value, ty: Ty | None = None):
    """Numbers (ideal ones as full-precision strings), arrays for tensors,
    {"inl"/"inr": ...} for injections, null for unit.

    With a type, tensor spines are flattened along the type's right-nesting
    (a num^3 value prints as [a, b, c], a matrix as rows); without one the
    grouping of nested pairs is ambiguous, so arrays stay binary.
    """
    if ty is not None:
        match (v, ty):
            case (_, ast.DiscT(inner)):
                return value_to_json(v, inner)
            case (NumA(x), ast.NumT()):
                return x
            case (NumI(x), ast.NumT()):
                return str(x)
            case (UnitV(), ast.UnitT()):
                return None
            case (PairV(a, b), ast.TensorT(l, r)):
                from bean.syntax.printer import _power_chain
                chain = _power_chain(ty)
                if chain is not None:  # uniform t^k: flat k-element array
                    base, k = chain
                    items, cur = [], v
                    for _ in range(k - 1):
                        items.append(value_to_json(cur.fst, base))
                        cur = cur.snd
                    items.append(value_to_json(cur, base))
                    return items
                return [value_to_json(a, l), value_to_json(b, r)]
            case (InlV(x), ast.SumT(l, _)):
                return {"inl": value_to_json(x, l)}
            case (InrV(x), ast.SumT(_, r)):
                return {"inr": value_to_json(x, r)}
        raise EvalError(f"value {v!r} does not match type {ty!r}")
    match v:
        case NumA(x):
            return x
        case NumI(x):
            return str(x)
        case UnitV():
            return None
        case PairV(a, b):
            return [value_to_json(a), value_to_json(b)]
        case InlV(x):
            return {"inl": value_to_json(x)}
        case InrV(x):
            return {"inr": value_to_json(x)}
    raise EvalError(f"not a value: {v!r}")


def value_from_json(data, ty: Ty, cfg: RoundingConfig | None = None,
                    ideal: bool = False) -> Value:
    """Rebuild a value against its type; arrays follow the right-nested
    expansion of tensors."""
    match ty:
        case ast.NumT() | ast.DiscT(ast.NumT()):
            if not isinstance(data, (int, float, str)):
                raise InputShapeError(f"expected a number, got {data!r}")
            if ideal:
                ictx = IdealContext(cfg or RoundingConfig())
                return NumI(ictx.make(data if isinstance(data, str) else float(data)))
            return NumA(float(data))
        case ast.UnitT():
            if data is not None:
                raise InputShapeError(f"expected null for unit, got {data!r}")
            return UNIT_V
        case ast.TensorT(l, r):
            if not isinstance(data, list) or len(data) < 2:
                raise InputShapeError(
                    f"expected an array of at least 2 items, got {data!r}")
            fst = value_from_json(data[0], l, cfg, ideal)
            rest = data[1] if len(data) == 2 else data[1:]
            snd = value_from_json(rest, r, cfg, ideal)
            return PairV(fst, snd)
        case ast.SumT(l, r):
            if isinstance(data, dict) and set(data) == {"inl"}:
                return InlV(value_from_json(data["inl"], l, cfg, ideal))
            if isinstance(data, dict) and set(data) == {"inr"}:
                return InrV(value_from_json(data["inr"], r, cfg, ideal))
            raise InputShapeError(
                f'expected {{"inl": ...}} or {{"inr": ...}}, got {data!r}')
        case ast.DiscT(inner):
            return value_from_json(data, inner, cfg, ideal)
    raise InputShapeError(f"cannot build a value of type {ty!r}")


def format_value(v: Value) -> str:
    """Surface display: (a, b), inl v, inr (), numbers."""
    match v:
        case NumA(x):
            return repr(x)
        case NumI(x):
            return str(x)
        case UnitV():
            return "()"
        case PairV(_, _):
            items = []
            cur = v
            while isinstance(cur, PairV):
                items.append(format_value(cur.fst))
                cur = cur.snd
            items.append(format_value(cur))
            return "(" + ", ".join(items) + ")"
        case InlV(x):
            return f"inl {format_value(x)}"
        case InrV(x):
            return f"inr {format_value(x)}"
    raise EvalError(f"not a value: {v!r}")
