"""Pretty-printing of types, expressions and programs.

``parse(pretty_print(e))`` is structurally equal to ``e``; the printers are
exercised against the parser by round-trip property tests. Right-nested
tensor chains of one repeated factor print with the ``^`` shorthand, and
right-nested pair spines print as n-ary tuples, both of which re-parse to
the same tree.
"""

from __future__ import annotations

from bean.syntax import ast
from bean.syntax.ast import Expr, Program, TopLevelDef, Ty

# type printer precedence: sum < tensor < atom
_PREC_SUM, _PREC_TENSOR, _PREC_ATOM = 0, 1, 2


def pretty_print_type(t: Ty, erase_disc: bool = False) -> str:
    if erase_disc:
        t = _erase_disc(t)
    return _ty(t, _PREC_SUM)


def _erase_disc(t: Ty) -> Ty:
    match t:
        case ast.DiscT(inner):
            return _erase_disc(inner)
        case ast.TensorT(l, r):
            return ast.TensorT(_erase_disc(l), _erase_disc(r))
        case ast.SumT(l, r):
            return ast.SumT(_erase_disc(l), _erase_disc(r))
        case _:
            return t


def _power_chain(t: Ty) -> tuple[Ty, int] | None:
    """Match ``t = base * (base * (... * base))`` for one repeated base."""
    if not isinstance(t, ast.TensorT):
        return None
    base = t.left
    count = 1
    rest: Ty = t.right
    while isinstance(rest, ast.TensorT) and rest.left == base:
        count += 1
        rest = rest.right
    if rest == base:
        return base, count + 1
    return None


def _ty(t: Ty, prec: int) -> str:
    match t:
        case ast.NumT():
            return "num"
        case ast.UnitT():
            return "unit"
        case ast.DiscT(inner):
            return "!" + _ty(inner, _PREC_ATOM)
        case ast.TensorT(l, r):
            chain = _power_chain(t)
            if chain is not None:
                base, n = chain
                if isinstance(base, (ast.TensorT, ast.SumT)):
                    return f"({_ty(base, _PREC_SUM)})^{n}"
                return f"{_ty(base, _PREC_ATOM)}^{n}"
            s = f"{_ty(l, _PREC_ATOM)} * {_ty(r, _PREC_TENSOR)}"
            return f"({s})" if prec > _PREC_TENSOR else s
        case ast.SumT(l, r):
            s = f"{_ty(l, _PREC_TENSOR)} + {_ty(r, _PREC_SUM)}"
            return f"({s})" if prec > _PREC_SUM else s
        case _:
            raise TypeError(f"cannot print type {t!r}")


def pretty_print(e: Expr) -> str:
    return _expr(e, top=True)


def _expr(e: Expr, top: bool) -> str:
    # Walk let-spines iteratively; deep programs are pure let-chains.
    lines: list[str] = []
    while True:
        match e:
            case ast.Let(x, bound, body):
                lines.append(f"let {x} = {_expr(bound, top=False)} in")
                e = body
            case ast.DLet(x, bound, body):
                lines.append(f"dlet {x} = {_expr(bound, top=False)} in")
                e = body
            case ast.LetPair(x, y, bound, body):
                lines.append(f"let ({x}, {y}) = {_expr(bound, top=False)} in")
                e = body
            case ast.DLetPair(x, y, bound, body):
                lines.append(f"dlet ({x}, {y}) = {_expr(bound, top=False)} in")
                e = body
            case _:
                lines.append(_tail(e))
                break
    sep = "\n" if top else " "
    text = sep.join(lines)
    if not top and len(lines) > 1:
        return f"({text})"
    return text


def _tail(e: Expr) -> str:
    match e:
        case ast.Case(s, lv, lb, rv, rb):
            return (
                f"case {_expr(s, top=False)} of"
                f" inl ({lv}) => {_branch(lb)}"
                f" | inr ({rv}) => {_branch(rb)}"
            )
        case ast.Add(x, y):
            return f"add {_atom(x)} {_atom(y)}"
        case ast.Sub(x, y):
            return f"sub {_atom(x)} {_atom(y)}"
        case ast.Mul(x, y):
            return f"mul {_atom(x)} {_atom(y)}"
        case ast.Div(x, y):
            return f"div {_atom(x)} {_atom(y)}"
        case ast.DMul(z, x):
            return f"dmul {_atom(z)} {_atom(x)}"
        case ast.Inl(body, ann):
            s = f"inl {_atom(body)}"
            return s if ann is None else f"{s} : {pretty_print_type(ann)}"
        case ast.Inr(body, ann):
            s = f"inr {_atom(body)}"
            return s if ann is None else f"{s} : {pretty_print_type(ann)}"
        case ast.Call(name, args):
            return " ".join([name, *(_atom(a) for a in args)])
        case _:
            return _atom(e)


def _branch(e: Expr) -> str:
    # A case directly under a branch would capture the enclosing `| inr`.
    if isinstance(e, ast.Case):
        return f"({_expr(e, top=False)})"
    return _expr(e, top=False)


def _atom(e: Expr) -> str:
    match e:
        case ast.RawVar(n) | ast.LinVar(n) | ast.DiscVar(n):
            return n
        case ast.UnitVal():
            return "()"
        case ast.Bang(body):
            return f"!{_atom(body)}"
        case ast.Pair(_, _):
            items = []
            cur: Expr = e
            while isinstance(cur, ast.Pair):
                items.append(cur.fst)
                cur = cur.snd
            items.append(cur)
            return "(" + ", ".join(_expr(i, top=False) for i in items) + ")"
        case _:
            return f"({_expr(e, top=False)})"


def pretty_print_def(d: TopLevelDef) -> str:
    parts = [d.name]
    for p in d.params:
        open_, close = ("{", "}") if p.is_discrete else ("(", ")")
        parts.append(f"{open_}{p.name} : {pretty_print_type(p.ty)}{close}")
    header = " ".join(parts)
    return f"{header} :=\n{_expr(d.body, top=True)}"


def pretty_print_program(p: Program) -> str:
    return "\n\n".join(pretty_print_def(d) for d in p.defs) + "\n"
