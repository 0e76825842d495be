"""Syntax of the language: AST, parser, printer, and normalization passes."""

from bean.syntax.ast import (  # noqa: F401
    Add,
    Bang,
    Call,
    Case,
    DiscT,
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
    NumT,
    Pair,
    Param,
    Program,
    RawVar,
    Sub,
    SumT,
    TensorT,
    TopLevelDef,
    Ty,
    UNIT,
    UnitT,
    UnitVal,
    count_ops,
    discretize,
    is_discrete_ty,
    normalize_ty,
    vector_ty,
)
from bean.syntax.parser import (  # noqa: F401
    parse_expr_fragment,
    parse_program,
    parse_type_fragment,
)
from bean.syntax.printer import (  # noqa: F401
    pretty_print,
    pretty_print_program,
    pretty_print_type,
)
from bean.syntax.transform import (  # noqa: F401
    desugar_ops,
    expand_defs,
    is_op_normal_form,
    resolve_scopes,
)
