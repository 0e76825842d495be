import random

import pytest

from bean.errors import (
    ArgKindError,
    ArityError,
    DuplicateDefError,
    LexError,
    ParseError,
    ScopeError,
    ShadowingError,
    UnboundVarError,
    UnknownDefError,
)
from bean.randprog import gen_program
from bean.syntax import (
    Add,
    Call,
    DiscT,
    LetPair,
    LinVar,
    Mul,
    NUM,
    Pair,
    SumT,
    TensorT,
    UnitVal,
    count_ops,
    desugar_ops,
    discretize,
    expand_defs,
    is_op_normal_form,
    normalize_ty,
    parse_program,
    parse_type_fragment,
    pretty_print,
    pretty_print_program,
    pretty_print_type,
    vector_ty,
)
from bean.syntax import ast
from bean.syntax.ast import iter_exprs

from conftest import analyze, load_program


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def test_parse_simple_def():
    p = parse_program("f (x : num) (y : num) := add x y")
    (d,) = p.defs
    assert d.name == "f"
    assert [q.kind for q in d.params] == ["linear", "linear"]
    assert d.body == Add(LinVar("x"), LinVar("y"))


def test_parse_dotprod2_shape():
    p = parse_program(load_program("dotprod2.bean"))
    body = p.defs[0].body
    letpairs = [e for e in iter_exprs(body) if isinstance(e, LetPair)]
    muls = [e for e in iter_exprs(body) if isinstance(e, Mul)]
    adds = [e for e in iter_exprs(body) if isinstance(e, Add)]
    assert len(letpairs) == 2 and len(muls) == 2 and len(adds) == 1


def test_parser_does_not_enforce_linearity():
    p = parse_program("f (x : num) := add x x")
    assert p.defs[0].body == Add(LinVar("x"), LinVar("x"))


def test_lex_error():
    with pytest.raises(LexError):
        parse_program("f (x : num) := add x $")


def test_syntax_error_carries_span():
    with pytest.raises(ParseError) as exc:
        parse_program("f (x : num) := let = x in x")
    assert exc.value.span is not None


def test_duplicate_definition():
    with pytest.raises(DuplicateDefError):
        parse_program("f (x : num) := x\nf (y : num) := y")


def test_duplicate_parameter():
    with pytest.raises(ParseError):
        parse_program("f (x : num) (x : num) := x")


def test_comments():
    p = parse_program("// leading\nf (x : num) := x // trailing\n")
    assert p.defs[0].body == LinVar("x")


def test_unbound_variable():
    with pytest.raises(UnboundVarError):
        parse_program("f (x : num) := add x ghost")


def test_shadowing_rejected():
    with pytest.raises(ShadowingError):
        parse_program("f (x : num) := let x = x in x")


def test_variable_cannot_be_applied():
    # from source this cannot even parse as one expression...
    with pytest.raises(ParseError):
        parse_program("f (x : num) (y : num) := x y")
    # ...and a constructed call to a variable is rejected at resolution
    from bean.syntax.transform import resolve_scopes
    prog = ast.Program((ast.TopLevelDef(
        "f",
        (ast.Param("f2", NUM, "linear"),),
        Call("f2", (ast.RawVar("f2"),))),))
    with pytest.raises(ScopeError):
        resolve_scopes(prog)


def test_discrete_params_discretized():
    p = parse_program("f {z : num^2} (x : num) := dmul z x")
    # ill-typed (z is a pair) but the parameter type is the point here
    assert p.defs[0].params[0].ty == TensorT(DiscT(NUM), DiscT(NUM))


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

def test_vector_shorthand():
    assert parse_type_fragment("num^1") == NUM
    assert parse_type_fragment("num^3") == TensorT(NUM, TensorT(NUM, NUM))
    assert parse_type_fragment("num^2 + unit") == SumT(vector_ty(2), ast.UNIT)


def test_matrix_type_power():
    row = vector_ty(2)
    assert parse_type_fragment("(num^2)^2") == TensorT(row, row)


def test_disc_normalization():
    assert parse_type_fragment("!(num * num)") == TensorT(DiscT(NUM), DiscT(NUM))
    assert normalize_ty(DiscT(DiscT(NUM))) == DiscT(NUM)
    assert normalize_ty(DiscT(ast.UNIT)) == ast.UNIT
    assert discretize(SumT(NUM, ast.UNIT)) == SumT(DiscT(NUM), ast.UNIT)


@pytest.mark.parametrize("src", [
    "num", "unit", "num^2", "num^17", "(num^2)^3", "!num",
    "num * num^2", "(num + unit) * num", "num^2 + unit", "!num * num + unit",
    "!num^4",
])
def test_type_round_trip(src):
    t = parse_type_fragment(src)
    assert parse_type_fragment(pretty_print_type(t)) == t


def test_type_display_erases_disc():
    t = parse_type_fragment("!num * num + unit")
    assert pretty_print_type(t, erase_disc=True) == "num^2 + unit"


# ---------------------------------------------------------------------------
# Pretty-printing round trips
# ---------------------------------------------------------------------------

def test_pretty_pair_unit():
    assert pretty_print(Pair(LinVar("x"), UnitVal())) == "(x, ())"


@pytest.mark.parametrize("name", [
    "dotprod2.bean", "scalevec.bean", "svecadd.bean", "innerproduct.bean",
    "matvecmul.bean", "smatvecmul.bean", "polyval.bean", "horner.bean",
    "polyvalalt.bean", "horneralt.bean", "linsolve.bean", "sum3.bean",
])
def test_round_trip_golden_programs(name):
    p = parse_program(load_program(name))
    assert parse_program(pretty_print_program(p)).defs == p.defs


def test_round_trip_nested_case():
    src = """
    f (x : num) (y : num) (w : num) :=
    case div x y of
      inl (a) =>
        case div a w of
          inl (b) => inl b : num + unit
        | inr (e) => inr e
    | inr (e) => inr e
    """
    p = parse_program(src)
    assert parse_program(pretty_print_program(p)).defs == p.defs


def test_round_trip_random_programs():
    for seed in range(150):
        p = gen_program(random.Random(seed))
        printed = pretty_print_program(p)
        assert parse_program(printed).defs == p.defs, printed


# ---------------------------------------------------------------------------
# Definition expansion
# ---------------------------------------------------------------------------

def test_expand_identity_without_calls():
    p = parse_program("f (x : num) (y : num) := add x y")
    body, params = expand_defs(p)
    assert body == p.defs[0].body
    assert params == p.defs[0].params


def test_expand_variable_substitution():
    p = parse_program("f (x : num) := x\ng (y : num) := f y")
    body, _ = expand_defs(p)
    assert body == LinVar("y")


def test_expand_smatvecmul_is_call_free():
    p = parse_program(load_program("smatvecmul.bean"))
    body, params = expand_defs(p)
    assert not any(isinstance(e, Call) for e in iter_exprs(body))
    assert [q.name for q in params] == ["M", "v", "u", "a", "b"]
    assert count_ops(body) == 12  # 6 (MatVecMul) + 2 (ScaleVec) + 4 (SVecAdd)


def test_expand_idempotent():
    p = parse_program(load_program("smatvecmul.bean"))
    body, params = expand_defs(p)
    again, _ = expand_defs(
        ast.Program((ast.TopLevelDef("Main", params, body),)))
    assert again == body


def test_expand_unknown_and_later_defs():
    # self-reference: the name is not an earlier definition
    with pytest.raises(UnknownDefError):
        expand_defs(parse_program("g (y : num) := g\n"))
    # forward reference to a later definition
    p = parse_program("g (y : num) := h\nh (x : num) := x", main="g")
    with pytest.raises(UnknownDefError):
        expand_defs(p)
    # application syntax only ever refers to earlier definitions, so a
    # forward call with arguments cannot even parse as one expression
    with pytest.raises(ParseError):
        parse_program("g (y : num) := h y\nh (x : num) := x")


def test_expand_arity_mismatch():
    p = parse_program("f (x : num) (y : num) := add x y\ng (a : num) := f a")
    with pytest.raises(ArityError):
        expand_defs(p)


def test_expand_kind_mismatch():
    p = parse_program("f {z : num} (x : num) := dmul z x\n"
                      "g (a : num) (b : num) := f a b")
    with pytest.raises(ArgKindError):
        expand_defs(p)
    p2 = parse_program("f (x : num) := x\ng {z : num} (b : num) := add (f z) b")
    with pytest.raises(ArgKindError):
        expand_defs(p2)


def test_expand_duplicated_discrete_arg_is_dlet_bound():
    p = parse_program(
        "f {z : num} (x : num) (y : num) :=\n"
        "let u = dmul z x in\n"
        "let v = dmul z y in\n"
        "add u v\n"
        "g (a : num) (b : num) (c : num) :=\n"
        "dlet w = !a in\n"
        "f w b c",
        main="g")
    # passing the variable w directly: no wrapper needed, still typechecks
    body, _ = expand_defs(p)
    a = analyze("f {z : num} (x : num) (y : num) :=\n"
                "let u = dmul z x in let v = dmul z y in add u v")
    assert a.param_grade("x").coeff == 2


# ---------------------------------------------------------------------------
# Operand normalization
# ---------------------------------------------------------------------------

def test_desugar_single_hoist():
    p = parse_program("f (a : num) (b : num) (c : num) := add (mul a b) c")
    body, _ = expand_defs(p)
    out = desugar_ops(body)
    match out:
        case ast.Let(t, ast.Mul(LinVar("a"), LinVar("b")),
                     Add(LinVar(t2), LinVar("c"))):
            assert t == t2
        case _:
            pytest.fail(f"unexpected desugaring: {out!r}")
    assert is_op_normal_form(out)


def test_desugar_identity_on_normal_form():
    p = parse_program("f (x : num) (y : num) := add x y")
    assert desugar_ops(p.defs[0].body) == p.defs[0].body


def test_desugar_dmul_uses_dlet():
    src = ("f {z : num} := z\n"
           "g {z : num} (x : num) := dmul (f z) x")
    p = parse_program(src, main="g")
    body = p.defs[1].body
    out = desugar_ops(body)
    match out:
        case ast.DLet(t, Call("f", _), ast.DMul(ast.DiscVar(t2), LinVar("x"))):
            assert t == t2
        case _:
            pytest.fail(f"unexpected desugaring: {out!r}")


def test_desugar_fresh_names_avoid_user_names():
    p = parse_program("f (a : num) (b : num) (t1 : num) := add (mul a b) t1")
    body, _ = expand_defs(p)
    out = desugar_ops(body)
    binders = [e.var for e in iter_exprs(out) if isinstance(e, ast.Let)]
    assert binders and all(b != "t1" for b in binders)
    assert is_op_normal_form(out)


def test_normal_form_predicate():
    p = parse_program("f (a : num) (b : num) (c : num) := add (mul a b) c")
    assert not is_op_normal_form(p.defs[0].body)


def test_desugared_and_sugared_infer_identically():
    sugared = analyze(
        "f (a : num) (b : num) (c : num) := add (mul a b) c")
    manual = analyze(
        "f (a : num) (b : num) (c : num) := let t = mul a b in add t c")
    assert sugared.result.ctx == manual.result.ctx
    assert sugared.result.ty == manual.result.ty


def test_dmul_call_hoist_infer_agreement():
    base = ("h {w : num} := w\n"
            "g {z : num} (x : num) := ")
    sugared = analyze(base + "dmul (h z) x", main="g")
    manual = analyze(base + "dlet t = h z in dmul t x", main="g")
    assert sugared.result.ctx == manual.result.ctx
