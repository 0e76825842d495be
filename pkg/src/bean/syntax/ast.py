"""Abstract syntax: types, kernel terms, top-level definitions.

Types are kept in a canonical form where the discrete wrapper ``!`` sits only
on ``num``: ``!(s * t)``, ``!(s + t)``, ``!unit`` and ``!!t`` are normalized
by pushing the wrapper inward (the discrete metric on a product/sum/unit
coincides with the product/sum/unit of discrete metrics, so this is an
identity on meanings). ``num^n`` is shorthand for the right-nested tensor
``num * num^(n-1)``, and more generally ``t^n`` right-nests ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from bean.errors import Span

Name = str


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

class Ty:
    __slots__ = ()


@dataclass(frozen=True)
class NumT(Ty):
    def __repr__(self) -> str:
        return "num"


@dataclass(frozen=True)
class UnitT(Ty):
    def __repr__(self) -> str:
        return "unit"


@dataclass(frozen=True)
class TensorT(Ty):
    left: Ty
    right: Ty


@dataclass(frozen=True)
class SumT(Ty):
    left: Ty
    right: Ty


@dataclass(frozen=True)
class DiscT(Ty):
    inner: Ty


NUM = NumT()
UNIT = UnitT()
DISC_NUM = DiscT(NUM)


def vector_ty(n: int, base: Ty = NUM) -> Ty:
    """Right-nested tensor ``base^n`` (n >= 1)."""
    if n < 1:
        raise ValueError("vector size must be >= 1")
    ty = base
    for _ in range(n - 1):
        ty = TensorT(base, ty)
    return ty


def normalize_ty(t: Ty) -> Ty:
    """Push ``!`` through tensor/sum/unit; collapse ``!!t``."""
    match t:
        case DiscT(inner):
            return discretize(normalize_ty(inner))
        case TensorT(l, r):
            return TensorT(normalize_ty(l), normalize_ty(r))
        case SumT(l, r):
            return SumT(normalize_ty(l), normalize_ty(r))
        case _:
            return t


def discretize(t: Ty) -> Ty:
    """The discrete counterpart of a (normalized) type."""
    match t:
        case NumT():
            return DISC_NUM
        case UnitT():
            return UNIT
        case TensorT(l, r):
            return TensorT(discretize(l), discretize(r))
        case SumT(l, r):
            return SumT(discretize(l), discretize(r))
        case DiscT(_):
            return t
        case _:
            raise TypeError(f"cannot discretize {t!r}")


def is_discrete_ty(t: Ty) -> bool:
    """True when no backward error can be pushed onto values of ``t``."""
    match t:
        case DiscT(_) | UnitT():
            return True
        case TensorT(l, r) | SumT(l, r):
            return is_discrete_ty(l) and is_discrete_ty(r)
        case _:
            return False


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class RawVar(Expr):
    """Unresolved identifier; eliminated by scope resolution."""

    name: Name
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class LinVar(Expr):
    name: Name
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class DiscVar(Expr):
    name: Name
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class UnitVal(Expr):
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Bang(Expr):
    body: Expr
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Pair(Expr):
    fst: Expr
    snd: Expr
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Inl(Expr):
    body: Expr
    ann: Ty | None = None  # optional `: s + t` ascription
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Inr(Expr):
    body: Expr
    ann: Ty | None = None
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Let(Expr):
    var: Name
    bound: Expr
    body: Expr
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class LetPair(Expr):
    var1: Name
    var2: Name
    bound: Expr
    body: Expr
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class DLet(Expr):
    var: Name
    bound: Expr
    body: Expr
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class DLetPair(Expr):
    var1: Name
    var2: Name
    bound: Expr
    body: Expr
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Case(Expr):
    scrutinee: Expr
    lvar: Name
    lbody: Expr
    rvar: Name
    rbody: Expr
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Add(Expr):
    x: Expr
    y: Expr
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Sub(Expr):
    x: Expr
    y: Expr
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Mul(Expr):
    x: Expr
    y: Expr
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Div(Expr):
    x: Expr
    y: Expr
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class DMul(Expr):
    z: Expr  # discrete operand (absorbs no error)
    x: Expr
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Call(Expr):
    """Application of a user-defined abbreviation; eliminated by expansion."""

    name: Name
    args: tuple[Expr, ...]
    span: Span | None = field(default=None, compare=False, repr=False)


OP_NODES = (Add, Sub, Mul, Div, DMul)


# ---------------------------------------------------------------------------
# Programs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Param:
    name: Name
    ty: Ty
    kind: str  # "linear" | "discrete"
    span: Span | None = field(default=None, compare=False, repr=False)

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"


@dataclass(frozen=True)
class TopLevelDef:
    name: Name
    params: tuple[Param, ...]
    body: Expr
    span: Span | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Program:
    defs: tuple[TopLevelDef, ...]
    main: Name | None = None  # defaults to the last definition

    def main_def(self) -> TopLevelDef:
        if not self.defs:
            raise ValueError("empty program")
        if self.main is None:
            return self.defs[-1]
        for d in self.defs:
            if d.name == self.main:
                return d
        raise ValueError(f"no definition named {self.main!r}")


def children(e: Expr) -> tuple[Expr, ...]:
    match e:
        case Bang(b) | Inl(b) | Inr(b):
            return (b,)
        case Pair(a, b):
            return (a, b)
        case Let(_, bound, body) | LetPair(_, _, bound, body) | \
                DLet(_, bound, body) | DLetPair(_, _, bound, body):
            return (bound, body)
        case Case(s, _, lb, _, rb):
            return (s, lb, rb)
        case Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | DMul(a, b):
            return (a, b)
        case Call(_, args):
            return args
        case _:
            return ()


def iter_exprs(e: Expr):
    """All subexpressions of ``e``, preorder, without recursion."""
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def all_names(e: Expr) -> set[Name]:
    names: set[Name] = set()
    for node in iter_exprs(e):
        match node:
            case RawVar(n) | LinVar(n) | DiscVar(n) | Let(n, _, _) | DLet(n, _, _):
                names.add(n)
            case LetPair(a, b, _, _) | DLetPair(a, b, _, _):
                names.update((a, b))
            case Case(_, lv, _, rv, _):
                names.update((lv, rv))
            case Call(n, _):
                names.add(n)
    return names


def count_ops(e: Expr) -> int:
    return sum(isinstance(node, OP_NODES) for node in iter_exprs(e))
