"""Dual-context graded typing and bottom-up backward-bound inference.

A judgment has a discrete context (reusable variables, never perturbed) and
a linear context whose bindings ``x :_r ty`` carry a grade: the bound on the
backward error that may be pushed onto ``x``, expressed as a rational
multiple of eps = u/(1-u). Inference takes a grade-free skeleton and returns
the tightest context: arithmetic charges eps per operand for add/sub and the
linear operand of dmul, eps/2 per operand for mul/div; let-style rules push
the bound variable's grade onto the bound expression's context; pair/case
elimination takes the max over the bound components.

The inference is syntax-directed and deterministic. Each run also produces a
derivation tree that an independent declarative checker can replay; that
checker recomputes every context from the leaves rather than trusting the
inference engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from bean.errors import (
    AmbiguousSumError,
    BeanTypeError,
    KindError,
    LinearityError,
    TypeMismatchError,
    UnboundVarError,
)
from bean.syntax import ast
from bean.syntax.ast import (
    Add,
    Bang,
    Call,
    Case,
    DiscVar,
    Div,
    DLet,
    DLetPair,
    DMul,
    Expr,
    Inl,
    Inr,
    Let,
    LetPair,
    LinVar,
    Mul,
    NUM,
    Pair,
    Program,
    RawVar,
    Sub,
    SumT,
    TensorT,
    Ty,
    UNIT,
    UnitVal,
    DISC_NUM,
)
from bean.syntax.printer import pretty_print_type
from bean.syntax.transform import desugar_ops, expand_defs

_LET_FORMS = (Let, DLet, LetPair, DLetPair)


# ---------------------------------------------------------------------------
# Grades
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Grade:
    """A nonnegative rational multiple of eps."""

    coeff: Fraction

    def __post_init__(self):
        if not isinstance(self.coeff, Fraction):
            object.__setattr__(self, "coeff", Fraction(self.coeff))
        if self.coeff < 0:
            raise ValueError("grades are nonnegative")

    def __add__(self, other: "Grade") -> "Grade":
        return Grade(self.coeff + other.coeff)

    def __str__(self) -> str:
        return f"{self.coeff} eps"

    @classmethod
    def of(cls, value) -> "Grade":
        """Grade from an eps-multiple given as int/Fraction/'3/2'."""
        return cls(Fraction(value))

    @classmethod
    def from_decimal(cls, text: str, cfg) -> "Grade":
        """Grade from a decimal bound (converted exactly to an eps multiple)."""
        return cls(Fraction(text) / cfg.eps)


ZERO = Grade(Fraction(0))
EPS = Grade(Fraction(1))
HALF_EPS = Grade(Fraction(1, 2))


# ---------------------------------------------------------------------------
# Contexts
# ---------------------------------------------------------------------------

DiscreteContext = dict  # name -> Ty (discrete)
ContextSkeleton = dict  # name -> Ty (no grades)


class LinearContext:
    """Ordered association ``name -> (type, grade)``, names distinct."""

    __slots__ = ("_entries",)

    def __init__(self, entries=None):
        if isinstance(entries, LinearContext):
            entries = entries._entries
        self._entries: dict[str, tuple[Ty, Grade]] = dict(entries or {})

    def items(self):
        return self._entries.items()

    def names(self):
        return self._entries.keys()

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __getitem__(self, name: str) -> tuple[Ty, Grade]:
        return self._entries[name]

    def grade_of(self, name: str, default: Grade = ZERO) -> Grade:
        entry = self._entries.get(name)
        return entry[1] if entry else default

    def ty_of(self, name: str) -> Ty:
        return self._entries[name][0]

    def __eq__(self, other) -> bool:
        if isinstance(other, LinearContext):
            return self._entries == other._entries
        return NotImplemented

    def __repr__(self) -> str:
        inner = ", ".join(
            f"{n} :_{g.coeff} {pretty_print_type(t)}" for n, (t, g) in self.items())
        return "{" + inner + "}"


def skeleton(ctx: LinearContext) -> ContextSkeleton:
    return {n: t for n, (t, _) in ctx.items()}


def ctx_add_grade(q: Grade, ctx: LinearContext) -> LinearContext:
    """``q + ctx``: every grade increased by q; domain and types unchanged."""
    return LinearContext({n: (t, g + q) for n, (t, g) in ctx.items()})


def ctx_max(a: LinearContext, b: LinearContext) -> LinearContext:
    """Pointwise max over the union of the two domains."""
    out = dict(a.items())
    for n, (t, g) in b.items():
        if n in out:
            t0, g0 = out[n]
            if not ty_equal(t0, t):
                raise TypeMismatchError(
                    f"{n!r} has type {pretty_print_type(t0)} in one context "
                    f"and {pretty_print_type(t)} in the other")
            out[n] = (t0, max(g0, g))
        else:
            out[n] = (t, g)
    return LinearContext(out)


def is_subcontext(a: LinearContext, b: LinearContext) -> bool:
    """Domain inclusion with pointwise smaller-or-equal grades."""
    for n, (t, g) in a.items():
        if n not in b:
            return False
        t2, g2 = b[n]
        if not ty_equal(t, t2) or g > g2:
            return False
    return True


# ---------------------------------------------------------------------------
# Type holes (for unannotated injections) and unification
# ---------------------------------------------------------------------------

class HoleT(Ty):
    """Placeholder for the missing side of an unannotated inl/inr."""

    __slots__ = ("ref",)

    def __init__(self):
        self.ref: Ty | None = None


def resolve(t: Ty) -> Ty:
    while isinstance(t, HoleT) and t.ref is not None:
        t = t.ref
    return t


def _occurs(hole: HoleT, t: Ty) -> bool:
    t = resolve(t)
    if t is hole:
        return True
    match t:
        case TensorT(l, r) | SumT(l, r):
            return _occurs(hole, l) or _occurs(hole, r)
        case ast.DiscT(inner):
            return _occurs(hole, inner)
        case _:
            return False


def unify(a: Ty, b: Ty, span=None) -> None:
    a, b = resolve(a), resolve(b)
    if a is b:
        return
    if isinstance(a, HoleT):
        if _occurs(a, b):
            raise TypeMismatchError("cyclic sum type", span)
        a.ref = b
        return
    if isinstance(b, HoleT):
        return unify(b, a, span)
    match (a, b):
        case (ast.NumT(), ast.NumT()) | (ast.UnitT(), ast.UnitT()):
            return
        case (TensorT(l1, r1), TensorT(l2, r2)) | (SumT(l1, r1), SumT(l2, r2)):
            unify(l1, l2, span)
            unify(r1, r2, span)
            return
        case (ast.DiscT(i1), ast.DiscT(i2)):
            unify(i1, i2, span)
            return
    raise TypeMismatchError(
        f"expected {_show_ty(a)}, found {_show_ty(b)}", span)


def zonk(t: Ty, span=None) -> Ty:
    t = resolve(t)
    if isinstance(t, HoleT):
        raise AmbiguousSumError(
            "cannot infer a sum component; ascribe the injection, "
            "e.g. 'inl e : s + t'", span)
    match t:
        case TensorT(l, r):
            return TensorT(zonk(l, span), zonk(r, span))
        case SumT(l, r):
            return SumT(zonk(l, span), zonk(r, span))
        case ast.DiscT(inner):
            return ast.DiscT(zonk(inner, span))
        case _:
            return t


def _show_ty(t: Ty) -> str:
    """Render a type for error messages; unresolved holes print as '_'."""
    t = resolve(t)
    if isinstance(t, HoleT):
        return "_"
    match t:
        case TensorT(l, r):
            return f"({_show_ty(l)} * {_show_ty(r)})"
        case SumT(l, r):
            return f"({_show_ty(l)} + {_show_ty(r)})"
        case ast.DiscT(inner):
            return f"!{_show_ty(inner)}"
        case _:
            return pretty_print_type(t)


def ty_equal(a: Ty, b: Ty) -> bool:
    a, b = resolve(a), resolve(b)
    if isinstance(a, HoleT) or isinstance(b, HoleT):
        return a is b
    match (a, b):
        case (ast.NumT(), ast.NumT()) | (ast.UnitT(), ast.UnitT()):
            return True
        case (TensorT(l1, r1), TensorT(l2, r2)) | (SumT(l1, r1), SumT(l2, r2)):
            return ty_equal(l1, l2) and ty_equal(r1, r2)
        case (ast.DiscT(i1), ast.DiscT(i2)):
            return ty_equal(i1, i2)
        case _:
            return False


def _discretize_resolved(t: Ty, span=None) -> Ty:
    t = resolve(t)
    if isinstance(t, HoleT):
        raise AmbiguousSumError(
            "cannot promote a value whose sum type is not yet known; "
            "ascribe the injection", span)
    match t:
        case TensorT(l, r):
            return TensorT(_discretize_resolved(l, span), _discretize_resolved(r, span))
        case SumT(l, r):
            return SumT(_discretize_resolved(l, span), _discretize_resolved(r, span))
        case _:
            return ast.discretize(t)


def _is_discrete_resolved(t: Ty, span=None) -> bool:
    t = resolve(t)
    if isinstance(t, HoleT):
        raise AmbiguousSumError(
            "cannot bind a discrete variable at an undetermined sum type; "
            "ascribe the injection", span)
    match t:
        case ast.DiscT(_) | ast.UnitT():
            return True
        case TensorT(l, r) | SumT(l, r):
            return _is_discrete_resolved(l, span) and _is_discrete_resolved(r, span)
        case _:
            return False


# ---------------------------------------------------------------------------
# Derivations
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Derivation:
    """One rule instance per node; replayable by the declarative checker.

    Contexts are recomputed on demand by ``check_derivation`` instead of
    being materialized per node (large benchmarks would hold millions of
    context entries otherwise).
    """

    rule: str
    expr: Expr
    ty: Ty
    grade: Grade | None = None
    children: tuple["Derivation", ...] = ()


@dataclass(eq=False)
class InferenceResult:
    ctx: LinearContext
    ty: Ty
    derivation: Derivation = field(repr=False)


# ---------------------------------------------------------------------------
# The inference algorithm
# ---------------------------------------------------------------------------

def infer(disc: DiscreteContext, skel: ContextSkeleton, e: Expr) -> InferenceResult:
    """Infer the tightest linear context and the type of ``e``.

    ``e`` must be scope-resolved, call-free, and in operand-normal form.
    Unused skeleton variables are dropped from the result.
    """
    common = disc.keys() & skel.keys()
    if common:
        raise BeanTypeError(
            f"discrete and linear contexts overlap on {sorted(common)}")
    ctx, ty, deriv = _infer(dict(disc), dict(skel), e)
    ty = zonk(ty, getattr(e, "span", None))
    _zonk_derivation(deriv)
    result = LinearContext({n: (zonk(t), g) for n, (t, g) in ctx.items()})
    return InferenceResult(result, ty, deriv)


def check_declared(disc: DiscreteContext, declared: LinearContext,
                   e: Expr) -> tuple[bool, InferenceResult]:
    """Does ``e`` satisfy the declared grades? (Inference + subcontext.)"""
    res = infer(disc, skeleton(declared), e)
    return is_subcontext(res.ctx, declared), res


def _pop_entry(ctx: dict, name: str, span) -> tuple[Ty | None, Grade]:
    if name in ctx:
        t, g = ctx.pop(name)
        return t, g
    return None, ZERO


def _merge_disjoint(dst: dict, src: dict, span) -> dict:
    for n, entry in src.items():
        if n in dst:
            raise LinearityError(
                f"linearity violation: {n!r} used more than once", span)
        dst[n] = entry
    return dst


def _bump_grades(ctx: dict, q: Grade) -> dict:
    if q != ZERO:
        for n, (t, g) in ctx.items():
            ctx[n] = (t, g + q)
    return ctx


def _ctx_max_inplace(a: dict, b: dict, span) -> dict:
    for n, (t, g) in b.items():
        if n in a:
            t0, g0 = a[n]
            if not ty_equal(t0, t):
                raise TypeMismatchError(
                    f"{n!r} used at two different types across branches", span)
            a[n] = (t0, max(g0, g))
        else:
            a[n] = (t, g)
    return a


def _infer(disc: dict, skel: dict, e: Expr):
    """Returns (ctx: dict name->(Ty, Grade), ty, derivation)."""
    frames = []
    while isinstance(e, _LET_FORMS):
        span = e.span
        bctx, bty, bderiv = _infer(disc, skel, e.bound)
        match e:
            case Let(x, _, body):
                skel[x] = bty
                frames.append(("Let", e, (x,), bctx, bty, bderiv, span))
                e = body
            case LetPair(x, y, _, body):
                h1, h2 = HoleT(), HoleT()
                unify(bty, TensorT(h1, h2), span)
                skel[x] = h1
                skel[y] = h2
                frames.append(("LetPair", e, (x, y), bctx, bty, bderiv, span))
                e = body
            case DLet(z, _, body):
                if not _is_discrete_resolved(bty, span):
                    raise KindError(
                        "dlet requires a discrete right-hand side, found "
                        f"type {_show_ty(bty)}", span)
                disc[z] = bty
                frames.append(("DLet", e, (z,), bctx, bty, bderiv, span))
                e = body
            case DLetPair(z1, z2, _, body):
                h1, h2 = HoleT(), HoleT()
                unify(bty, TensorT(h1, h2), span)
                if not (_is_discrete_resolved(h1, span)
                        and _is_discrete_resolved(h2, span)):
                    raise KindError(
                        "dlet pattern requires a pair of discrete components,"
                        f" found {_show_ty(bty)}", span)
                disc[z1] = resolve(h1)
                disc[z2] = resolve(h2)
                frames.append(("DLetPair", e, (z1, z2), bctx, bty, bderiv, span))
                e = body

    ctx, ty, deriv = _infer_tail(disc, skel, e)

    for rule, node, binders, bctx, bty, bderiv, span in reversed(frames):
        if rule == "Let":
            (x,) = binders
            del skel[x]
            _, r = _pop_entry(ctx, x, span)
            _merge_disjoint(ctx, _bump_grades(bctx, r), span)
            deriv = Derivation("Let", node, ty, r, (bderiv, deriv))
        elif rule == "LetPair":
            x, y = binders
            del skel[x], skel[y]
            _, gx = _pop_entry(ctx, x, span)
            _, gy = _pop_entry(ctx, y, span)
            r = max(gx, gy)
            _merge_disjoint(ctx, _bump_grades(bctx, r), span)
            deriv = Derivation("LetPair", node, ty, r, (bderiv, deriv))
        elif rule == "DLet":
            (z,) = binders
            del disc[z]
            _merge_disjoint(ctx, bctx, span)
            deriv = Derivation("DLet", node, ty, None, (bderiv, deriv))
        else:  # DLetPair
            z1, z2 = binders
            del disc[z1], disc[z2]
            _merge_disjoint(ctx, bctx, span)
            deriv = Derivation("DLetPair", node, ty, None, (bderiv, deriv))
    return ctx, ty, deriv


def _lookup_num_operand(disc: dict, skel: dict, operand: Expr, op: str):
    """Operands of arithmetic are linear num-typed variables."""
    span = getattr(operand, "span", None)
    match operand:
        case LinVar(name):
            if name not in skel:
                raise UnboundVarError(f"unbound variable {name!r}", span)
            unify(skel[name], NUM, span)
            return name
        case DiscVar(name):
            raise KindError(
                f"{op} needs a linear operand, but {name!r} is discrete", span)
        case _:
            raise ValueError(
                f"{op} applied to a non-variable operand; run desugar_ops first")


def _infer_tail(disc: dict, skel: dict, e: Expr):
    span = getattr(e, "span", None)
    match e:
        case LinVar(name):
            if name not in skel:
                raise UnboundVarError(f"unbound variable {name!r}", span)
            ty = skel[name]
            return {name: (ty, ZERO)}, ty, Derivation("Var", e, ty)
        case DiscVar(name):
            if name not in disc:
                raise UnboundVarError(f"unbound discrete variable {name!r}", span)
            ty = disc[name]
            return {}, ty, Derivation("DVar", e, ty)
        case UnitVal():
            return {}, UNIT, Derivation("Unit", e, UNIT)
        case Bang(body):
            bctx, bty, bderiv = _infer(disc, skel, body)
            ty = _discretize_resolved(bty, span)
            return bctx, ty, Derivation("Disc", e, ty, None, (bderiv,))
        case Pair(a, b):
            actx, aty, aderiv = _infer(disc, skel, a)
            bctx, bty, bderiv = _infer(disc, skel, b)
            ctx = _merge_disjoint(actx, bctx, span)
            ty = TensorT(aty, bty)
            return ctx, ty, Derivation("Pair", e, ty, None, (aderiv, bderiv))
        case Inl(body, ann):
            bctx, bty, bderiv = _infer(disc, skel, body)
            if ann is not None:
                if not isinstance(ann, SumT):
                    raise TypeMismatchError(
                        "ascription on inl must be a sum type", span)
                unify(bty, ann.left, span)
                ty: Ty = ann
            else:
                ty = SumT(bty, HoleT())
            return bctx, ty, Derivation("Inl", e, ty, None, (bderiv,))
        case Inr(body, ann):
            bctx, bty, bderiv = _infer(disc, skel, body)
            if ann is not None:
                if not isinstance(ann, SumT):
                    raise TypeMismatchError(
                        "ascription on inr must be a sum type", span)
                unify(bty, ann.right, span)
                ty = ann
            else:
                ty = SumT(HoleT(), bty)
            return bctx, ty, Derivation("Inr", e, ty, None, (bderiv,))
        case Case(scrut, lv, lbody, rv, rbody):
            sctx, sty, sderiv = _infer(disc, skel, scrut)
            h1, h2 = HoleT(), HoleT()
            unify(sty, SumT(h1, h2), span)
            skel[lv] = h1
            lctx, lty, lderiv = _infer(disc, skel, lbody)
            del skel[lv]
            skel[rv] = h2
            rctx, rty, rderiv = _infer(disc, skel, rbody)
            del skel[rv]
            unify(lty, rty, span)
            _, gl = _pop_entry(lctx, lv, span)
            _, gr = _pop_entry(rctx, rv, span)
            q = max(gl, gr)
            delta = _ctx_max_inplace(lctx, rctx, span)
            ctx = _merge_disjoint(delta, _bump_grades(sctx, q), span)
            return ctx, lty, Derivation(
                "Case", e, lty, q, (sderiv, lderiv, rderiv))
        case Add(x, y) | Sub(x, y) | Mul(x, y):
            rule = type(e).__name__
            charge = HALF_EPS if rule == "Mul" else EPS
            nx = _lookup_num_operand(disc, skel, x, rule.lower())
            ny = _lookup_num_operand(disc, skel, y, rule.lower())
            if nx == ny:
                raise LinearityError(
                    f"linearity violation: {nx!r} used twice", span)
            ctx = {nx: (NUM, charge), ny: (NUM, charge)}
            return ctx, NUM, Derivation(rule, e, NUM)
        case Div(x, y):
            nx = _lookup_num_operand(disc, skel, x, "div")
            ny = _lookup_num_operand(disc, skel, y, "div")
            if nx == ny:
                raise LinearityError(
                    f"linearity violation: {nx!r} used twice", span)
            ctx = {nx: (NUM, HALF_EPS), ny: (NUM, HALF_EPS)}
            ty = SumT(NUM, UNIT)
            return ctx, ty, Derivation("Div", e, ty)
        case DMul(z, x):
            match z:
                case DiscVar(zname):
                    if zname not in disc:
                        raise UnboundVarError(
                            f"unbound discrete variable {zname!r}", span)
                    unify(disc[zname], DISC_NUM, span)
                case LinVar(zname):
                    raise KindError(
                        f"dmul's first operand must be discrete, but "
                        f"{zname!r} is linear", span)
                case _:
                    raise ValueError(
                        "dmul applied to a non-variable operand; run "
                        "desugar_ops first")
            nx = _lookup_num_operand(disc, skel, x, "dmul")
            ctx = {nx: (NUM, EPS)}
            return ctx, NUM, Derivation("DMul", e, NUM)
        case Call(name, _):
            raise BeanTypeError(
                f"call to {name!r} was not expanded; run expand_defs first", span)
        case RawVar(name):
            raise UnboundVarError(
                f"unresolved identifier {name!r}; run resolve_scopes first", span)
        case _:
            raise TypeError(f"cannot infer {e!r}")


def _zonk_derivation(root: Derivation) -> None:
    stack = [root]
    while stack:
        d = stack.pop()
        d.ty = zonk(d.ty, getattr(d.expr, "span", None))
        stack.extend(d.children)


# ---------------------------------------------------------------------------
# Declarative re-checker (independent replay of the typing rules)
# ---------------------------------------------------------------------------

class DerivationCheckError(BeanTypeError):
    code = "derivation-check"


def check_derivation(deriv: Derivation, disc: DiscreteContext,
                     expected: InferenceResult | None = None) -> tuple[LinearContext, Ty]:
    """Replay the typing rules over a derivation, recomputing all contexts.

    Validates every side condition (disjointness, grade arithmetic, branch
    agreement) from the leaves up, sharing nothing with the inference engine
    beyond the data types. When ``expected`` is given, the recomputed root
    judgment must match it exactly.
    """
    ctx, ty = _check(deriv, dict(disc))
    result = LinearContext(ctx)
    if expected is not None:
        if result != expected.ctx:
            raise DerivationCheckError(
                f"recomputed context {result!r} differs from inferred "
                f"{expected.ctx!r}")
        if not ty_equal(ty, expected.ty):
            raise DerivationCheckError("recomputed type differs from inferred")
    return result, ty


def _fail(d: Derivation, why: str):
    raise DerivationCheckError(f"{d.rule} node: {why}",
                               getattr(d.expr, "span", None))


def _check(deriv: Derivation, phi: dict):
    frames = []
    d = deriv
    while d.rule in ("Let", "LetPair", "DLet", "DLetPair"):
        bound_d, body_d = d.children
        bctx, bty = _check(bound_d, phi)
        if d.rule == "DLet":
            if not ast.is_discrete_ty(bty):
                _fail(d, "dlet of a non-discrete type")
            phi[d.expr.var] = bty
        elif d.rule == "DLetPair":
            if not isinstance(bty, TensorT):
                _fail(d, "dlet pair of a non-tensor")
            if not (ast.is_discrete_ty(bty.left) and ast.is_discrete_ty(bty.right)):
                _fail(d, "dlet pair of non-discrete components")
            phi[d.expr.var1] = bty.left
            phi[d.expr.var2] = bty.right
        frames.append((d, bctx, bty))
        d = body_d

    ctx, ty = _check_tail(d, phi)

    for node, bctx, bty in reversed(frames):
        span = getattr(node.expr, "span", None)
        if node.rule == "Let":
            x = node.expr.var
            tx, r = _pop_checked(ctx, x, node)
            if tx is not None and not ty_equal(tx, bty):
                _fail(node, "bound variable used at a different type")
            if r != node.grade:
                _fail(node, "stored grade differs from the body's demand")
            _merge_or_fail(ctx, _bump(bctx, r), node)
        elif node.rule == "LetPair":
            if not isinstance(bty, TensorT):
                _fail(node, "let pair of a non-tensor")
            tx, gx = _pop_checked(ctx, node.expr.var1, node)
            ty2, gy = _pop_checked(ctx, node.expr.var2, node)
            if tx is not None and not ty_equal(tx, bty.left):
                _fail(node, "first component type mismatch")
            if ty2 is not None and not ty_equal(ty2, bty.right):
                _fail(node, "second component type mismatch")
            r = max(gx, gy)
            if r != node.grade:
                _fail(node, "stored grade differs from max of components")
            _merge_or_fail(ctx, _bump(bctx, r), node)
        else:  # DLet / DLetPair
            if node.rule == "DLet":
                del phi[node.expr.var]
            else:
                del phi[node.expr.var1], phi[node.expr.var2]
            _merge_or_fail(ctx, bctx, node)
        if not ty_equal(node.ty, ty):
            _fail(node, "node type differs from body type")
    return ctx, ty


def _pop_checked(ctx: dict, name: str, node: Derivation):
    if name in ctx:
        t, g = ctx.pop(name)
        return t, g
    return None, ZERO


def _merge_or_fail(dst: dict, src: dict, node: Derivation) -> None:
    for n, entry in src.items():
        if n in dst:
            _fail(node, f"{n!r} appears in two disjoint premises")
        dst[n] = entry


def _bump(ctx: dict, q: Grade) -> dict:
    return {n: (t, g + q) for n, (t, g) in ctx.items()}


def _check_tail(d: Derivation, phi: dict):
    e = d.expr
    match d.rule:
        case "Var":
            if not isinstance(e, LinVar):
                _fail(d, "expression is not a linear variable")
            return {e.name: (d.ty, ZERO)}, d.ty
        case "DVar":
            if not isinstance(e, DiscVar) or e.name not in phi:
                _fail(d, "expression is not a bound discrete variable")
            if not ty_equal(phi[e.name], d.ty):
                _fail(d, "discrete variable type mismatch")
            return {}, d.ty
        case "Unit":
            if d.ty != UNIT:
                _fail(d, "unit node with a non-unit type")
            return {}, UNIT
        case "Disc":
            ctx, bty = _check(d.children[0], phi)
            if not ty_equal(d.ty, ast.discretize(bty)):
                _fail(d, "promotion type mismatch")
            return ctx, d.ty
        case "Pair":
            actx, aty = _check(d.children[0], phi)
            bctx, bty = _check(d.children[1], phi)
            _merge_or_fail(actx, bctx, d)
            if not ty_equal(d.ty, TensorT(aty, bty)):
                _fail(d, "pair type mismatch")
            return actx, d.ty
        case "Inl":
            ctx, bty = _check(d.children[0], phi)
            if not isinstance(d.ty, SumT) or not ty_equal(d.ty.left, bty):
                _fail(d, "inl type mismatch")
            return ctx, d.ty
        case "Inr":
            ctx, bty = _check(d.children[0], phi)
            if not isinstance(d.ty, SumT) or not ty_equal(d.ty.right, bty):
                _fail(d, "inr type mismatch")
            return ctx, d.ty
        case "Case":
            sctx, sty = _check(d.children[0], phi)
            if not isinstance(sty, SumT):
                _fail(d, "case scrutinee is not a sum")
            lctx, lty = _check(d.children[1], phi)
            rctx, rty = _check(d.children[2], phi)
            if not ty_equal(lty, rty) or not ty_equal(d.ty, lty):
                _fail(d, "branch types differ")
            tl, gl = _pop_checked(lctx, e.lvar, d)
            if tl is not None and not ty_equal(tl, sty.left):
                _fail(d, "left branch variable type mismatch")
            tr, gr = _pop_checked(rctx, e.rvar, d)
            if tr is not None and not ty_equal(tr, sty.right):
                _fail(d, "right branch variable type mismatch")
            if max(gl, gr) != d.grade:
                _fail(d, "stored case grade differs from branch max")
            delta = dict(lctx)
            for n, (t, g) in rctx.items():
                if n in delta:
                    t0, g0 = delta[n]
                    if not ty_equal(t0, t):
                        _fail(d, "shared branch variable at two types")
                    delta[n] = (t0, max(g0, g))
                else:
                    delta[n] = (t, g)
            _merge_or_fail(delta, _bump(sctx, d.grade), d)
            return delta, d.ty
        case "Add" | "Sub" | "Mul" | "Div":
            ops = {"Add": Add, "Sub": Sub, "Mul": Mul, "Div": Div}
            if not isinstance(e, ops[d.rule]):
                _fail(d, "rule does not match expression")
            x, y = e.x, e.y
            if not (isinstance(x, LinVar) and isinstance(y, LinVar)):
                _fail(d, "operands must be linear variables")
            if x.name == y.name:
                _fail(d, "operands must be distinct")
            charge = HALF_EPS if d.rule in ("Mul", "Div") else EPS
            want_ty = SumT(NUM, UNIT) if d.rule == "Div" else NUM
            if not ty_equal(d.ty, want_ty):
                _fail(d, "primitive result type mismatch")
            return {x.name: (NUM, charge), y.name: (NUM, charge)}, d.ty
        case "DMul":
            if not isinstance(e, DMul):
                _fail(d, "rule does not match expression")
            if not isinstance(e.z, DiscVar) or phi.get(e.z.name) != DISC_NUM:
                _fail(d, "first operand must be a discrete num variable")
            if not isinstance(e.x, LinVar):
                _fail(d, "second operand must be a linear variable")
            if not ty_equal(d.ty, NUM):
                _fail(d, "dmul result type mismatch")
            return {e.x.name: (NUM, EPS)}, NUM
        case _:
            _fail(d, f"unknown rule {d.rule!r}")


# ---------------------------------------------------------------------------
# Whole-program analysis pipeline
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Analysis:
    """parse -> expand -> desugar -> infer, bundled for the CLI and harness."""

    program: Program
    name: str
    params: tuple
    body: Expr
    disc: DiscreteContext
    skel: ContextSkeleton
    result: InferenceResult

    def param_grade(self, name: str) -> Grade:
        return self.result.ctx.grade_of(name, ZERO)

    @property
    def linear_params(self):
        return tuple(p for p in self.params if not p.is_discrete)

    @property
    def discrete_params(self):
        return tuple(p for p in self.params if p.is_discrete)


def analyze_program(program: Program) -> Analysis:
    main = program.main_def()
    body, params = expand_defs(program)
    body = desugar_ops(body)
    disc = {p.name: p.ty for p in params if p.is_discrete}
    skel = {p.name: p.ty for p in params if not p.is_discrete}
    result = infer(disc, skel, body)
    return Analysis(program, main.name, params, body, disc, skel, result)
