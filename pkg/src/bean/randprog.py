"""Random well-typed program generation.

Programs are built forward as a let-chain over a random parameter list,
consuming each linear variable at most once, so every generated program
typechecks by construction. The shapes cover pair introduction and
elimination, discrete promotion and reuse, division with case analysis on
the error branch, annotated and unannotated injections, and both hoisted
and compound (sugared) arithmetic.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from bean.syntax import ast
from bean.syntax.ast import (
    Add,
    Bang,
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
    Param,
    Program,
    Sub,
    SumT,
    TensorT,
    TopLevelDef,
    UnitVal,
    DISC_NUM,
)

_NUM2 = TensorT(NUM, NUM)


@dataclass
class _Gen:
    rng: random.Random
    lin: dict[str, ast.Ty] = field(default_factory=dict)
    disc: dict[str, ast.Ty] = field(default_factory=dict)
    counter: int = 0

    def fresh(self, base: str = "t") -> str:
        self.counter += 1
        return f"{base}{self.counter}"

    def take_num(self) -> str | None:
        names = [n for n, t in self.lin.items() if t == NUM]
        if not names:
            return None
        name = self.rng.choice(names)
        del self.lin[name]
        return name

    def peek_nums(self) -> list[str]:
        return [n for n, t in self.lin.items() if t == NUM]


def gen_program(rng: random.Random, max_steps: int = 8) -> Program:
    g = _Gen(rng)
    params: list[Param] = []
    for _ in range(rng.randint(2, 4)):
        name = g.fresh("x")
        g.lin[name] = NUM
        params.append(Param(name, NUM, "linear"))
    if rng.random() < 0.6:
        name = g.fresh("v")
        g.lin[name] = _NUM2
        params.append(Param(name, _NUM2, "linear"))
    if rng.random() < 0.7:
        name = g.fresh("z")
        g.disc[name] = DISC_NUM
        params.append(Param(name, DISC_NUM, "discrete"))

    headers: list[tuple] = []
    for _ in range(rng.randint(1, max_steps)):
        _gen_step(g, headers)
    tail = _gen_tail(g)
    body = tail
    for ctor, args in reversed(headers):
        body = ctor(*args, body)
    name = "Main"
    return Program((TopLevelDef(name, tuple(params), body),))


def _gen_step(g: _Gen, headers: list) -> None:
    rng = g.rng
    choices = ["op"]
    if any(isinstance(t, TensorT) for t in g.lin.values()):
        choices.append("unpair")
    if len(g.peek_nums()) >= 2:
        choices += ["op", "mkpair", "divcase"]
    if g.disc and g.peek_nums():
        choices += ["dmul", "dmul"]
    if g.peek_nums():
        choices += ["bang", "sumcase"]
    kind = rng.choice(choices)

    if kind == "op" and len(g.peek_nums()) >= 2:
        x, y = g.take_num(), g.take_num()
        ctor = rng.choice((Add, Sub, Mul))
        t = g.fresh()
        headers.append((Let, (t, ctor(LinVar(x), LinVar(y)))))
        g.lin[t] = NUM
    elif kind == "unpair":
        pairs = [n for n, t in g.lin.items() if isinstance(t, TensorT)]
        name = rng.choice(pairs)
        ty = g.lin.pop(name)
        a, b = g.fresh("a"), g.fresh("b")
        headers.append((LetPair, (a, b, LinVar(name))))
        g.lin[a] = ty.left
        g.lin[b] = ty.right
    elif kind == "mkpair":
        x, y = g.take_num(), g.take_num()
        t = g.fresh("p")
        headers.append((Let, (t, Pair(LinVar(x), LinVar(y)))))
        g.lin[t] = _NUM2
    elif kind == "dmul" and g.disc and g.peek_nums():
        z = rng.choice(list(g.disc))
        x = g.take_num()
        t = g.fresh()
        headers.append((Let, (t, DMul(DiscVar(z), LinVar(x)))))
        g.lin[t] = NUM
    elif kind == "bang" and g.peek_nums():
        x = g.take_num()
        if rng.random() < 0.5 or len(g.peek_nums()) == 0:
            w = g.fresh("w")
            headers.append((DLet, (w, Bang(LinVar(x)))))
            g.disc[w] = DISC_NUM
        else:
            y = g.take_num()
            w1, w2 = g.fresh("w"), g.fresh("w")
            headers.append(
                (DLetPair, (w1, w2, Bang(Pair(LinVar(x), LinVar(y))))))
            g.disc[w1] = DISC_NUM
            g.disc[w2] = DISC_NUM
    elif kind == "divcase" and len(g.peek_nums()) >= 2:
        x, y = g.take_num(), g.take_num()
        u, w = g.fresh("u"), g.fresh("w")
        shared = g.peek_nums()
        if shared:
            v = g.rng.choice(shared)
            del g.lin[v]
            lbody: Expr = Add(LinVar(u), LinVar(v)) if g.rng.random() < 0.5 else LinVar(u)
            rbody: Expr = LinVar(v)
            out_ty = NUM
        else:
            lbody, rbody, out_ty = UnitVal(), LinVar(w), ast.UNIT
        t = g.fresh()
        headers.append(
            (Let, (t, Case(Div(LinVar(x), LinVar(y)), u, lbody, w, rbody))))
        g.lin[t] = out_ty
    elif kind == "sumcase" and g.peek_nums():
        x = g.take_num()
        annotate = g.rng.random() < 0.5
        scrut: Expr
        if g.rng.random() < 0.5:
            scrut = Inl(LinVar(x), SumT(NUM, NUM) if annotate else None)
        else:
            scrut = Inr(LinVar(x), SumT(NUM, NUM) if annotate else None)
        u, w = g.fresh("u"), g.fresh("w")
        t = g.fresh()
        headers.append((Let, (t, Case(scrut, u, LinVar(u), w, LinVar(w)))))
        g.lin[t] = NUM
    else:
        # fall back to promoting a variable when the chosen shape is starved
        if g.peek_nums():
            x = g.take_num()
            w = g.fresh("w")
            headers.append((DLet, (w, Bang(LinVar(x)))))
            g.disc[w] = DISC_NUM


def _gen_tail(g: _Gen) -> Expr:
    rng = g.rng
    nums = g.peek_nums()
    if len(nums) >= 3 and rng.random() < 0.4:
        a, b, c = g.take_num(), g.take_num(), g.take_num()
        # compound (sugared) arithmetic: exercises operand hoisting
        return Add(Mul(LinVar(a), LinVar(b)), LinVar(c))
    if len(nums) >= 2 and rng.random() < 0.5:
        a, b = g.take_num(), g.take_num()
        if rng.random() < 0.5:
            return Pair(LinVar(a), LinVar(b))
        return rng.choice((Add, Sub, Mul))(LinVar(a), LinVar(b))
    if nums:
        x = g.take_num()
        if rng.random() < 0.3:
            return Inl(LinVar(x), SumT(NUM, ast.UNIT))
        return LinVar(x)
    others = list(g.lin)
    if others:
        return LinVar(others[0])
    if g.disc and rng.random() < 0.5:
        return DiscVar(next(iter(g.disc)))
    return UnitVal()
