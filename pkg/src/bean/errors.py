"""Diagnostics: source spans, machine-readable error codes, exception tree.

Every user-facing failure is a ``BeanError`` subclass with a stable ``code``
(consumed by the CLI's JSON output) and an ``exit_code`` class (2 for parse
failures, 1 for everything semantic).
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Span:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


class BeanError(Exception):
    code = "error"
    exit_code = 1

    def __init__(self, message: str, span: Span | None = None):
        super().__init__(message)
        self.message = message
        self.span = span

    def render(self, filename: str | None = None) -> str:
        loc = f"{filename}:" if filename else ""
        if self.span is not None:
            loc += f"{self.span}:"
        prefix = f"{loc} " if loc else ""
        return f"{prefix}error[{self.code}]: {self.message}"


# -- parse stage (exit code 2) -------------------------------------------

class LexError(BeanError):
    code = "lex"
    exit_code = 2


class ParseError(BeanError):
    code = "syntax"
    exit_code = 2


class DuplicateDefError(BeanError):
    code = "duplicate-def"
    exit_code = 2


# -- scope checking ---------------------------------------------------------

class ScopeError(BeanError):
    code = "scope"


class UnboundVarError(ScopeError):
    code = "unbound-variable"


class ShadowingError(ScopeError):
    code = "shadowing"


# -- definition expansion ----------------------------------------------------

class ExpandError(BeanError):
    code = "expand"


class UnknownDefError(ExpandError):
    code = "unknown-def"


class ArityError(ExpandError):
    code = "arity-mismatch"


class ArgKindError(ExpandError):
    code = "argument-kind-mismatch"


# -- type checking ------------------------------------------------------------

class BeanTypeError(BeanError):
    code = "type"


class LinearityError(BeanTypeError):
    code = "linearity-violation"


class KindError(BeanTypeError):
    code = "kind-error"


class TypeMismatchError(BeanTypeError):
    code = "type-mismatch"


class AmbiguousSumError(BeanTypeError):
    code = "ambiguous-sum-type"


# -- evaluation ---------------------------------------------------------------

class EvalError(BeanError):
    code = "eval"


class InputShapeError(EvalError):
    code = "input-shape"


class ApproxOverflowError(EvalError):
    code = "overflow"


class BackwardDomainError(EvalError):
    """Target at infinite distance from the approximate result."""

    code = "backward-domain"
