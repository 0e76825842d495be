"""Concrete grammar: tokenizer and recursive-descent parser.

Definitions look like ``Name (x : ty) {z : ty} := body`` with parentheses
marking linear parameters and braces marking discrete ones. Expressions use
the keyword forms ``let p = e in e``, ``dlet p = e in e``,
``case e of inl (x) => e | inr (y) => e``, ``!e``, ``inl e``/``inr e``
(optionally ascribed ``inl e : s + t``), tuples, and the primitive operators
``add sub mul div dmul`` applied to atoms. ``//`` comments run to end of
line. Let-chains are parsed iteratively so deeply sequential programs do not
hit the interpreter recursion limit.
"""

from __future__ import annotations

from dataclasses import dataclass

from bean.errors import DuplicateDefError, LexError, ParseError, Span
from bean.syntax import ast
from bean.syntax.ast import Expr, Param, Program, TopLevelDef, Ty

KEYWORDS = {
    "let", "dlet", "in", "case", "of", "inl", "inr",
    "add", "sub", "mul", "div", "dmul", "num", "unit",
}

OP_KEYWORDS = {"add": ast.Add, "sub": ast.Sub, "mul": ast.Mul, "div": ast.Div}

PUNCT = (":=", "=>", "(", ")", "{", "}", ",", "=", "|", ":", "+", "*", "^", "!")


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "int" | "punct" | "eof"
    text: str
    span: Span


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                i += 1
            continue
        span = Span(line, col)
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(Token("ident", source[i:j], span))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            tokens.append(Token("int", source[i:j], span))
            col += j - i
            i = j
            continue
        for p in PUNCT:
            if source.startswith(p, i):
                tokens.append(Token("punct", p, span))
                i += len(p)
                col += len(p)
                break
        else:
            raise LexError(f"unexpected character {c!r}", span)
    tokens.append(Token("eof", "", Span(line, col)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0
        # Application is juxtaposition, which would otherwise swallow the
        # next definition header; only already-defined names (the only legal
        # call targets) may head an application.
        self.def_names: set[str] = set()

    # -- token helpers ---------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at_punct(self, text: str) -> bool:
        t = self.peek()
        return t.kind == "punct" and t.text == text

    def at_kw(self, word: str) -> bool:
        t = self.peek()
        return t.kind == "ident" and t.text == word

    def expect_punct(self, text: str) -> Token:
        if not self.at_punct(text):
            t = self.peek()
            raise ParseError(f"expected {text!r}, found {t.text or 'end of file'!r}", t.span)
        return self.next()

    def expect_kw(self, word: str) -> Token:
        if not self.at_kw(word):
            t = self.peek()
            raise ParseError(f"expected {word!r}, found {t.text or 'end of file'!r}", t.span)
        return self.next()

    def expect_ident(self, what: str = "identifier") -> Token:
        t = self.peek()
        if t.kind != "ident" or t.text in KEYWORDS:
            raise ParseError(f"expected {what}, found {t.text or 'end of file'!r}", t.span)
        return self.next()

    # -- types -------------------------------------------------------------

    def parse_type(self) -> Ty:
        left = self.parse_type_tensor()
        if self.at_punct("+"):
            self.next()
            right = self.parse_type()
            return ast.SumT(left, right)
        return left

    def parse_type_tensor(self) -> Ty:
        left = self.parse_type_atom()
        if self.at_punct("*"):
            self.next()
            right = self.parse_type_tensor()
            return ast.TensorT(left, right)
        return left

    def parse_type_atom(self) -> Ty:
        t = self.peek()
        if self.at_punct("!"):
            self.next()
            inner = self.parse_type_atom()
            base: Ty = ast.normalize_ty(ast.DiscT(inner))
        elif self.at_kw("num"):
            self.next()
            base = ast.NUM
        elif self.at_kw("unit"):
            self.next()
            base = ast.UNIT
        elif self.at_punct("("):
            self.next()
            base = self.parse_type()
            self.expect_punct(")")
        else:
            raise ParseError(f"expected a type, found {t.text or 'end of file'!r}", t.span)
        if self.at_punct("^"):
            self.next()
            ntok = self.peek()
            if ntok.kind != "int":
                raise ParseError("expected an integer after '^'", ntok.span)
            self.next()
            n = int(ntok.text)
            if n < 1:
                raise ParseError("tensor power must be >= 1", ntok.span)
            base = ast.vector_ty(n, base)
        return base

    # -- expressions -----------------------------------------------------

    def parse_expr(self) -> Expr:
        # Collect let/dlet headers iteratively, then fold over the tail.
        headers: list[tuple[str, tuple, Span]] = []
        while True:
            if self.at_kw("let") or self.at_kw("dlet"):
                kw = self.next()
                pat = self.parse_pattern()
                self.expect_punct("=")
                bound = self.parse_expr()
                self.expect_kw("in")
                headers.append((kw.text, (pat, bound), kw.span))
                continue
            if self.at_kw("case"):
                tail = self.parse_case()
            else:
                tail = self.parse_ascription()
            break
        for kw, (pat, bound), span in reversed(headers):
            if isinstance(pat, tuple):
                cls = ast.LetPair if kw == "let" else ast.DLetPair
                tail = cls(pat[0], pat[1], bound, tail, span=span)
            else:
                cls = ast.Let if kw == "let" else ast.DLet
                tail = cls(pat, bound, tail, span=span)
        return tail

    def parse_pattern(self):
        if self.at_punct("("):
            self.next()
            a = self.expect_ident("pattern variable").text
            self.expect_punct(",")
            b = self.expect_ident("pattern variable").text
            close = self.expect_punct(")")
            if a == b:
                raise ParseError(f"pattern binds {a!r} twice", close.span)
            return (a, b)
        return self.expect_ident("pattern variable").text

    def parse_case(self) -> Expr:
        kw = self.expect_kw("case")
        scrutinee = self.parse_expr()
        self.expect_kw("of")
        self.expect_kw("inl")
        lvar = self.parse_branch_binder()
        self.expect_punct("=>")
        lbody = self.parse_expr()
        self.expect_punct("|")
        self.expect_kw("inr")
        rvar = self.parse_branch_binder()
        self.expect_punct("=>")
        rbody = self.parse_expr()
        return ast.Case(scrutinee, lvar, lbody, rvar, rbody, span=kw.span)

    def parse_branch_binder(self) -> str:
        if self.at_punct("("):
            self.next()
            name = self.expect_ident("branch variable").text
            self.expect_punct(")")
            return name
        return self.expect_ident("branch variable").text

    def parse_ascription(self) -> Expr:
        e = self.parse_app()
        if self.at_punct(":"):
            colon = self.next()
            ty = self.parse_type()
            match e:
                case ast.Inl(body, None, span=span):
                    return ast.Inl(body, ty, span=span)
                case ast.Inr(body, None, span=span):
                    return ast.Inr(body, ty, span=span)
                case _:
                    raise ParseError("type ascription is only allowed on inl/inr", colon.span)
        return e

    def parse_app(self) -> Expr:
        t = self.peek()
        if t.kind == "ident" and t.text in OP_KEYWORDS:
            self.next()
            x = self.parse_atom()
            y = self.parse_atom()
            return OP_KEYWORDS[t.text](x, y, span=t.span)
        if self.at_kw("dmul"):
            self.next()
            z = self.parse_atom()
            x = self.parse_atom()
            return ast.DMul(z, x, span=t.span)
        if self.at_kw("inl") or self.at_kw("inr"):
            self.next()
            body = self.parse_atom()
            cls = ast.Inl if t.text == "inl" else ast.Inr
            return cls(body, None, span=t.span)
        if t.kind == "ident" and t.text not in KEYWORDS:
            head = self.next()
            if head.text in self.def_names:
                args: list[Expr] = []
                while self.starts_atom():
                    args.append(self.parse_atom())
                return ast.Call(head.text, tuple(args), span=head.span)
            return ast.RawVar(head.text, span=head.span)
        return self.parse_atom()

    def starts_atom(self) -> bool:
        t = self.peek()
        if t.kind == "punct" and t.text in ("(", "!"):
            return True
        return t.kind == "ident" and t.text not in KEYWORDS

    def parse_atom(self) -> Expr:
        t = self.peek()
        if self.at_punct("!"):
            self.next()
            body = self.parse_atom()
            return ast.Bang(body, span=t.span)
        if self.at_punct("("):
            self.next()
            if self.at_punct(")"):
                self.next()
                return ast.UnitVal(span=t.span)
            items = [self.parse_expr()]
            while self.at_punct(","):
                self.next()
                items.append(self.parse_expr())
            self.expect_punct(")")
            expr = items[-1]
            for item in reversed(items[:-1]):
                expr = ast.Pair(item, expr, span=t.span)
            return expr
        if t.kind == "ident" and t.text not in KEYWORDS:
            self.next()
            return ast.RawVar(t.text, span=t.span)
        raise ParseError(f"expected an expression, found {t.text or 'end of file'!r}", t.span)

    # -- definitions --------------------------------------------------------

    def parse_def(self) -> TopLevelDef:
        name = self.expect_ident("definition name")
        params: list[Param] = []
        while self.at_punct("(") or self.at_punct("{"):
            opener = self.next()
            kind = "linear" if opener.text == "(" else "discrete"
            pname = self.expect_ident("parameter name")
            self.expect_punct(":")
            ty = self.parse_type()
            self.expect_punct(")" if opener.text == "(" else "}")
            if kind == "discrete":
                ty = ast.discretize(ast.normalize_ty(ty))
            else:
                ty = ast.normalize_ty(ty)
            params.append(Param(pname.text, ty, kind, span=pname.span))
        self.expect_punct(":=")
        body = self.parse_expr()
        seen: set[str] = set()
        for p in params:
            if p.name in seen:
                raise ParseError(f"duplicate parameter {p.name!r}", p.span)
            seen.add(p.name)
        return TopLevelDef(name.text, tuple(params), body, span=name.span)

    def parse_program(self) -> Program:
        defs: list[TopLevelDef] = []
        while self.peek().kind != "eof":
            d = self.parse_def()
            if d.name in self.def_names:
                raise DuplicateDefError(f"definition {d.name!r} already exists", d.span)
            self.def_names.add(d.name)
            defs.append(d)
        if not defs:
            raise ParseError("a program needs at least one definition", self.peek().span)
        return Program(tuple(defs))


def parse_program(source: str, main: str | None = None) -> Program:
    """Parse and scope-check a whole program."""
    from bean.syntax.transform import resolve_scopes

    program = _Parser(tokenize(source)).parse_program()
    if main is not None:
        if all(d.name != main for d in program.defs):
            raise ParseError(f"no definition named {main!r}")
        program = Program(program.defs, main)
    return resolve_scopes(program)


def parse_expr_fragment(source: str) -> Expr:
    """Parse a bare (unresolved) expression; used by tests."""
    p = _Parser(tokenize(source))
    e = p.parse_expr()
    t = p.peek()
    if t.kind != "eof":
        raise ParseError(f"trailing input {t.text!r}", t.span)
    return e


def parse_type_fragment(source: str) -> Ty:
    p = _Parser(tokenize(source))
    t = p.parse_type()
    tok = p.peek()
    if tok.kind != "eof":
        raise ParseError(f"trailing input {tok.text!r}", tok.span)
    return t
