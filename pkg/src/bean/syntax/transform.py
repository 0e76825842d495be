"""Scope resolution, abbreviation expansion, operand normalization.

The pipeline for analyzing a program is parse -> resolve_scopes ->
expand_defs -> desugar_ops; the type checker requires the final normal form
where every arithmetic operand is a variable.
"""

from __future__ import annotations

from dataclasses import dataclass

from bean.errors import (
    ArgKindError,
    ArityError,
    ScopeError,
    ShadowingError,
    UnboundVarError,
    UnknownDefError,
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
    Pair,
    Param,
    Program,
    RawVar,
    Sub,
    TopLevelDef,
    UnitVal,
)

_LET_FORMS = (Let, DLet, LetPair, DLetPair)


class NameSupply:
    """Fresh names guaranteed not to collide with any name seen so far."""

    def __init__(self, used=()):
        self.used = set(used)

    def reserve(self, names) -> None:
        self.used.update(names)

    def fresh(self, base: str) -> str:
        k = 1
        while f"{base}{k}" in self.used:
            k += 1
        name = f"{base}{k}"
        self.used.add(name)
        return name


# ---------------------------------------------------------------------------
# Scope resolution
# ---------------------------------------------------------------------------

def resolve_scopes(program: Program) -> Program:
    """Classify identifiers as linear/discrete variables or calls.

    Rejects unbound names, shadowing (contexts require pairwise-distinct
    names), and application of anything that is not a previously parsed
    definition.
    """
    def_names = {d.name for d in program.defs}
    new_defs = []
    for d in program.defs:
        env: dict[str, str] = {}
        for p in d.params:
            if p.name in def_names:
                raise ShadowingError(
                    f"parameter {p.name!r} shadows a definition", p.span)
            env[p.name] = "discrete" if p.is_discrete else "linear"
        body = _resolve(d.body, env, def_names)
        new_defs.append(TopLevelDef(d.name, d.params, body, span=d.span))
    return Program(tuple(new_defs), program.main)


def _bind(name: str, kind: str, env: dict, def_names: set, span) -> None:
    if name in env or name in def_names:
        raise ShadowingError(f"{name!r} is already in scope", span)
    env[name] = kind


def _resolve(e: Expr, env: dict, defs: set) -> Expr:
    headers = []
    while isinstance(e, _LET_FORMS):
        bound = _resolve(e.bound, env, defs)
        match e:
            case Let(x, _, body, span=sp):
                _bind(x, "linear", env, defs, sp)
                headers.append((Let, (x,), bound, sp))
            case DLet(x, _, body, span=sp):
                _bind(x, "discrete", env, defs, sp)
                headers.append((DLet, (x,), bound, sp))
            case LetPair(x, y, _, body, span=sp):
                _bind(x, "linear", env, defs, sp)
                _bind(y, "linear", env, defs, sp)
                headers.append((LetPair, (x, y), bound, sp))
            case DLetPair(x, y, _, body, span=sp):
                _bind(x, "discrete", env, defs, sp)
                _bind(y, "discrete", env, defs, sp)
                headers.append((DLetPair, (x, y), bound, sp))
        e = body
    tail = _resolve_tail(e, env, defs)
    for ctor, binders, bound, span in reversed(headers):
        for b in binders:
            del env[b]
        tail = ctor(*binders, bound, tail, span=span)
    return tail


def _resolve_tail(e: Expr, env: dict, defs: set) -> Expr:
    match e:
        case RawVar(name, span=sp):
            kind = env.get(name)
            if kind == "linear":
                return LinVar(name, span=sp)
            if kind == "discrete":
                return DiscVar(name, span=sp)
            if name in defs:
                return Call(name, (), span=sp)
            raise UnboundVarError(f"unbound variable {name!r}", sp)
        case Call(name, args, span=sp):
            if name in env:
                raise ScopeError(
                    f"{name!r} is a variable and cannot be applied", sp)
            if name not in defs:
                raise UnknownDefError(f"call to unknown definition {name!r}", sp)
            return Call(name, tuple(_resolve(a, env, defs) for a in args), span=sp)
        case UnitVal():
            return e
        case Bang(b, span=sp):
            return Bang(_resolve(b, env, defs), span=sp)
        case Pair(a, b, span=sp):
            return Pair(_resolve(a, env, defs), _resolve(b, env, defs), span=sp)
        case Inl(b, ann, span=sp):
            return Inl(_resolve(b, env, defs), ann, span=sp)
        case Inr(b, ann, span=sp):
            return Inr(_resolve(b, env, defs), ann, span=sp)
        case Case(s, lv, lb, rv, rb, span=sp):
            s2 = _resolve(s, env, defs)
            _bind(lv, "linear", env, defs, sp)
            lb2 = _resolve(lb, env, defs)
            del env[lv]
            _bind(rv, "linear", env, defs, sp)
            rb2 = _resolve(rb, env, defs)
            del env[rv]
            return Case(s2, lv, lb2, rv, rb2, span=sp)
        case Add(x, y, span=sp):
            return Add(_resolve(x, env, defs), _resolve(y, env, defs), span=sp)
        case Sub(x, y, span=sp):
            return Sub(_resolve(x, env, defs), _resolve(y, env, defs), span=sp)
        case Mul(x, y, span=sp):
            return Mul(_resolve(x, env, defs), _resolve(y, env, defs), span=sp)
        case Div(x, y, span=sp):
            return Div(_resolve(x, env, defs), _resolve(y, env, defs), span=sp)
        case DMul(z, x, span=sp):
            return DMul(_resolve(z, env, defs), _resolve(x, env, defs), span=sp)
        case LinVar(_) | DiscVar(_):
            return e  # already resolved (re-resolution is idempotent)
        case _:
            raise TypeError(f"cannot resolve {e!r}")


# ---------------------------------------------------------------------------
# Definition expansion (abbreviations are macros: no function types exist)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpandedMain:
    name: str
    params: tuple[Param, ...]
    body: Expr


def expand_defs(program: Program) -> tuple[Expr, tuple[Param, ...]]:
    """Inline every call in the main definition; the result is call-free.

    A definition may only call definitions that appear before it, so the
    call graph is acyclic by construction. Inlined bodies have all their
    binders renamed to fresh names (capture avoidance); a discrete parameter
    used more than once receives its argument through a single dlet binding
    so the argument expression is never duplicated.
    """
    supply = NameSupply()
    for d in program.defs:
        supply.reserve(ast.all_names(d.body))
        supply.reserve(p.name for p in d.params)
        supply.reserve((d.name,))

    expanded: dict[str, TopLevelDef] = {}
    for d in program.defs:
        body = _expand(d.body, expanded, supply)
        expanded[d.name] = TopLevelDef(d.name, d.params, body, span=d.span)

    main = expanded[program.main_def().name]
    return main.body, main.params


def _expand(e: Expr, expanded: dict, supply: NameSupply) -> Expr:
    headers = []
    while isinstance(e, _LET_FORMS):
        bound = _expand(e.bound, expanded, supply)
        match e:
            case Let(x, _, body) | DLet(x, _, body):
                headers.append((type(e), (x,), bound, e.span))
            case LetPair(x, y, _, body) | DLetPair(x, y, _, body):
                headers.append((type(e), (x, y), bound, e.span))
        e = body
    tail = _expand_tail(e, expanded, supply)
    for ctor, binders, bound, span in reversed(headers):
        tail = ctor(*binders, bound, tail, span=span)
    return tail


def _expand_tail(e: Expr, expanded: dict, supply: NameSupply) -> Expr:
    match e:
        case Call(name, args, span=sp):
            target = expanded.get(name)
            if target is None:
                raise UnknownDefError(
                    f"{name!r} is not defined yet; definitions may only call "
                    f"earlier definitions", sp)
            args = tuple(_expand(a, expanded, supply) for a in args)
            if len(args) != len(target.params):
                raise ArityError(
                    f"{name} takes {len(target.params)} argument(s), "
                    f"got {len(args)}", sp)
            return _inline(target, args, supply, sp)
        case Bang(b, span=sp):
            return Bang(_expand(b, expanded, supply), span=sp)
        case Pair(a, b, span=sp):
            return Pair(_expand(a, expanded, supply), _expand(b, expanded, supply), span=sp)
        case Inl(b, ann, span=sp):
            return Inl(_expand(b, expanded, supply), ann, span=sp)
        case Inr(b, ann, span=sp):
            return Inr(_expand(b, expanded, supply), ann, span=sp)
        case Case(s, lv, lb, rv, rb, span=sp):
            return Case(
                _expand(s, expanded, supply), lv, _expand(lb, expanded, supply),
                rv, _expand(rb, expanded, supply), span=sp)
        case Add(x, y, span=sp):
            return Add(_expand(x, expanded, supply), _expand(y, expanded, supply), span=sp)
        case Sub(x, y, span=sp):
            return Sub(_expand(x, expanded, supply), _expand(y, expanded, supply), span=sp)
        case Mul(x, y, span=sp):
            return Mul(_expand(x, expanded, supply), _expand(y, expanded, supply), span=sp)
        case Div(x, y, span=sp):
            return Div(_expand(x, expanded, supply), _expand(y, expanded, supply), span=sp)
        case DMul(z, x, span=sp):
            return DMul(_expand(z, expanded, supply), _expand(x, expanded, supply), span=sp)
        case _:
            return e


def _inline(target: TopLevelDef, args: tuple[Expr, ...], supply: NameSupply, span) -> Expr:
    subst: dict[str, Expr] = {}
    wrappers: list[tuple[str, Expr]] = []
    uses = _count_var_uses(target.body)
    for p, arg in zip(target.params, args):
        if p.is_discrete:
            if isinstance(arg, LinVar):
                raise ArgKindError(
                    f"linear variable {arg.name!r} passed for discrete "
                    f"parameter {p.name!r} of {target.name}", span)
            if isinstance(arg, DiscVar) or uses.get(p.name, 0) <= 1:
                subst[p.name] = arg
            else:
                fresh = supply.fresh(p.name)
                subst[p.name] = DiscVar(fresh)
                wrappers.append((fresh, arg))
        else:
            if isinstance(arg, DiscVar):
                raise ArgKindError(
                    f"discrete variable {arg.name!r} passed for linear "
                    f"parameter {p.name!r} of {target.name}", span)
            subst[p.name] = arg
    body = _substitute(target.body, subst, {}, supply)
    for fresh, arg in reversed(wrappers):
        body = DLet(fresh, arg, body, span=span)
    return body


def _count_var_uses(e: Expr) -> dict[str, int]:
    uses: dict[str, int] = {}
    for node in ast.iter_exprs(e):
        if isinstance(node, (LinVar, DiscVar)):
            uses[node.name] = uses.get(node.name, 0) + 1
    return uses


def _substitute(e: Expr, subst: dict, renaming: dict, supply: NameSupply) -> Expr:
    """Replace free variables per ``subst``, freshening every binder."""
    headers = []
    renamed: list[str] = []

    def bind(x: str) -> str:
        fresh = supply.fresh(x)
        renaming[x] = fresh
        renamed.append(x)
        return fresh

    while isinstance(e, _LET_FORMS):
        bound = _substitute(e.bound, subst, renaming, supply)
        match e:
            case Let(x, _, body) | DLet(x, _, body):
                headers.append((type(e), (bind(x),), bound, e.span))
            case LetPair(x, y, _, body) | DLetPair(x, y, _, body):
                headers.append((type(e), (bind(x), bind(y)), bound, e.span))
        e = body
    tail = _subst_tail(e, subst, renaming, supply)
    for ctor, binders, bound, span in reversed(headers):
        tail = ctor(*binders, bound, tail, span=span)
    for x in renamed:
        del renaming[x]
    return tail


def _subst_tail(e: Expr, subst: dict, renaming: dict, supply: NameSupply) -> Expr:
    rec = lambda sub: _substitute(sub, subst, renaming, supply)
    match e:
        case LinVar(n, span=sp):
            if n in renaming:
                return LinVar(renaming[n], span=sp)
            return subst.get(n, e)
        case DiscVar(n, span=sp):
            if n in renaming:
                return DiscVar(renaming[n], span=sp)
            return subst.get(n, e)
        case UnitVal():
            return e
        case Bang(b, span=sp):
            return Bang(rec(b), span=sp)
        case Pair(a, b, span=sp):
            return Pair(rec(a), rec(b), span=sp)
        case Inl(b, ann, span=sp):
            return Inl(rec(b), ann, span=sp)
        case Inr(b, ann, span=sp):
            return Inr(rec(b), ann, span=sp)
        case Case(s, lv, lb, rv, rb, span=sp):
            s2 = rec(s)
            lv2 = supply.fresh(lv)
            renaming[lv] = lv2
            lb2 = rec(lb)
            del renaming[lv]
            rv2 = supply.fresh(rv)
            renaming[rv] = rv2
            rb2 = rec(rb)
            del renaming[rv]
            return Case(s2, lv2, lb2, rv2, rb2, span=sp)
        case Add(x, y, span=sp):
            return Add(rec(x), rec(y), span=sp)
        case Sub(x, y, span=sp):
            return Sub(rec(x), rec(y), span=sp)
        case Mul(x, y, span=sp):
            return Mul(rec(x), rec(y), span=sp)
        case Div(x, y, span=sp):
            return Div(rec(x), rec(y), span=sp)
        case DMul(z, x, span=sp):
            return DMul(rec(z), rec(x), span=sp)
        case Call(_, _):
            raise AssertionError("expanded bodies are call-free")
        case _:
            raise TypeError(f"cannot substitute in {e!r}")


# ---------------------------------------------------------------------------
# Operand normalization
# ---------------------------------------------------------------------------

def desugar_ops(e: Expr) -> Expr:
    """Hoist non-variable operands of arithmetic primitives into lets.

    ``add e1 e2`` becomes ``let t1 = e1 in let t2 = e2 in add t1 t2``; the
    first (discrete) operand of ``dmul`` is hoisted with ``dlet``. Fresh
    names never collide with names already present.
    """
    supply = NameSupply(ast.all_names(e))
    return _desugar(e, supply)


def _desugar(e: Expr, supply: NameSupply) -> Expr:
    headers = []
    while isinstance(e, _LET_FORMS):
        bound = _desugar(e.bound, supply)
        match e:
            case Let(x, _, body) | DLet(x, _, body):
                headers.append((type(e), (x,), bound, e.span))
            case LetPair(x, y, _, body) | DLetPair(x, y, _, body):
                headers.append((type(e), (x, y), bound, e.span))
        e = body
    tail = _desugar_tail(e, supply)
    for ctor, binders, bound, span in reversed(headers):
        tail = ctor(*binders, bound, tail, span=span)
    return tail


def _is_var(e: Expr) -> bool:
    return isinstance(e, (LinVar, DiscVar))


def _desugar_tail(e: Expr, supply: NameSupply) -> Expr:
    rec = lambda sub: _desugar(sub, supply)
    match e:
        case Add(x, y, span=sp) | Sub(x, y, span=sp) | Mul(x, y, span=sp) | Div(x, y, span=sp):
            ctor = type(e)
            x2, y2 = rec(x), rec(y)
            hoists = []
            if not _is_var(x2):
                t = supply.fresh("t")
                hoists.append((Let, t, x2))
                x2 = LinVar(t)
            if not _is_var(y2):
                t = supply.fresh("t")
                hoists.append((Let, t, y2))
                y2 = LinVar(t)
            out: Expr = ctor(x2, y2, span=sp)
            for cls, t, bound in reversed(hoists):
                out = cls(t, bound, out, span=sp)
            return out
        case DMul(z, x, span=sp):
            z2, x2 = rec(z), rec(x)
            hoists = []
            if not _is_var(z2):
                t = supply.fresh("t")
                hoists.append((DLet, t, z2))
                z2 = DiscVar(t)
            if not _is_var(x2):
                t = supply.fresh("t")
                hoists.append((Let, t, x2))
                x2 = LinVar(t)
            out = DMul(z2, x2, span=sp)
            for cls, t, bound in reversed(hoists):
                out = cls(t, bound, out, span=sp)
            return out
        case Bang(b, span=sp):
            return Bang(rec(b), span=sp)
        case Pair(a, b, span=sp):
            return Pair(rec(a), rec(b), span=sp)
        case Inl(b, ann, span=sp):
            return Inl(rec(b), ann, span=sp)
        case Inr(b, ann, span=sp):
            return Inr(rec(b), ann, span=sp)
        case Case(s, lv, lb, rv, rb, span=sp):
            return Case(rec(s), lv, rec(lb), rv, rec(rb), span=sp)
        case Call(name, args, span=sp):
            return Call(name, tuple(rec(a) for a in args), span=sp)
        case _:
            return e


def is_op_normal_form(e: Expr) -> bool:
    """True when every arithmetic primitive has variable operands."""
    for node in ast.iter_exprs(e):
        match node:
            case Add(x, y) | Sub(x, y) | Mul(x, y) | Div(x, y) | DMul(x, y):
                if not (_is_var(x) and _is_var(y)):
                    return False
    return True
