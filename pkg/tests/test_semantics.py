import math
from fractions import Fraction

import gmpy2
import pytest

from bean.errors import BackwardDomainError
from bean.numerics import IdealContext, RoundingConfig
from bean.semantics import (
    Env,
    InlV,
    InrV,
    NumA,
    NumI,
    PairV,
    UNIT_V,
    backward_add,
    backward_div,
    backward_dmul,
    backward_eval,
    backward_mul,
    backward_sub,
    distances,
    eval_approx,
    eval_ideal,
    format_value,
    primitive_backward,
    sub_backward,
    value_distance,
    value_from_json,
    value_to_ideal,
    value_to_json,
)
from bean.syntax import parse_type_fragment

from conftest import analyze, load_program

CFG = RoundingConfig()
IC = IdealContext(CFG)
TOL = IC.make(Fraction(1, 2**200))


def num_env(analysis, **values) -> Env:
    env = Env()
    for p in analysis.params:
        v = values[p.name]
        val = value_from_json(v, p.ty, CFG)
        (env.disc if p.is_discrete else env.lin)[p.name] = val
    return env


# ---------------------------------------------------------------------------
# Forward evaluation
# ---------------------------------------------------------------------------

def test_ideal_dotprod2_exact():
    a = analyze(load_program("dotprod2.bean"))
    env = num_env(a, x=[1.0, 2.0], y=[3.0, 4.0])
    out = eval_ideal(a.result.derivation, env, CFG)
    assert isinstance(out, NumI) and out.val == 11  # 1*3 + 2*4, exactly


def test_ideal_linsolve_solves():
    a = analyze(load_program("linsolve.bean"))
    env = num_env(a, A=[[2.0, 0.0], [0.0, 2.0]], b=[2.0, 4.0])
    out = eval_ideal(a.result.derivation, env, CFG)
    match out:
        case InlV(PairV(NumI(x0), NumI(x1))):
            assert x0 == 1 and x1 == 2
        case _:
            pytest.fail(f"unexpected result {out!r}")


def test_linsolve_division_by_zero_branch():
    a = analyze(load_program("linsolve.bean"))
    env = num_env(a, A=[[0.0, 0.0], [0.0, 2.0]], b=[2.0, 4.0])
    assert eval_ideal(a.result.derivation, env, CFG) == InrV(UNIT_V)
    assert eval_approx(a.result.derivation, env) == InrV(UNIT_V)
    assert format_value(InrV(UNIT_V)) == "inr ()"


def _sum_program(n):
    lines = [f"Sum (x : num^{n}) :="]
    xs = [f"x{i}" for i in range(1, n + 1)]
    cur = "x"
    for i in range(n - 2):
        lines.append(f"let (x{i+1}, r{i+1}) = {cur} in")
        cur = f"r{i+1}"
    lines.append(f"let (x{n-1}, x{n}) = {cur} in")
    acc = xs[0]
    for i, t in enumerate(xs[1:-1], start=1):
        lines.append(f"let s{i} = add {acc} {t} in")
        acc = f"s{i}"
    lines.append(f"add {acc} {xs[-1]}")
    return analyze("\n".join(lines))


def test_approx_left_fold_matches_binary64():
    a = _sum_program(10)
    env = num_env(a, x=[0.1] * 10)
    out = eval_approx(a.result.derivation, env)
    oracle = 0.0
    vals = [0.1] * 10
    oracle = vals[0]
    for v in vals[1:]:
        oracle = oracle + v
    assert isinstance(out, NumA) and out.val == oracle == 0.9999999999999999


def test_approx_exact_addition():
    a = analyze("f (x : num) (y : num) := add x y")
    env = num_env(a, x=1.0, y=1.0)
    assert eval_approx(a.result.derivation, env) == NumA(2.0)


def test_approx_orthogonal_dotprod_is_zero():
    a = analyze(load_program("dotprod2.bean"))
    env = num_env(a, x=[1.0, 1.0], y=[1.0, -1.0])
    assert eval_approx(a.result.derivation, env) == NumA(0.0)


def test_eval_approx_deterministic():
    a = analyze(load_program("linsolve.bean"))
    env = num_env(a, A=[[3.0, 0.0], [1.5, 7.0]], b=[2.25, 4.5])
    assert eval_approx(a.result.derivation, env) == \
        eval_approx(a.result.derivation, env)


# ---------------------------------------------------------------------------
# Primitive backward maps
# ---------------------------------------------------------------------------

def test_backward_add_splits_proportionally():
    b1, b2 = backward_add(IC, 1.0, 1.0, 2.5)
    assert b1 == 1.25 and b2 == 1.25


def test_backward_add_zero_case():
    assert backward_add(IC, 0.0, 0.0, 0.0) == (0, 0)
    b1, b2 = backward_add(IC, 1.0, -1.0, 0.0)
    assert b1 == 1 and b2 == -1


def test_backward_add_domain_error():
    with pytest.raises(BackwardDomainError):
        backward_add(IC, 1.0, 1.0, -3.0)
    with pytest.raises(BackwardDomainError):
        backward_add(IC, 1.0, -1.0, 5.0)


def test_backward_mul_sqrt_split():
    b1, b2 = backward_mul(IC, 2.0, 3.0, 12.0)
    s = IC.sqrt(IC.make(2.0))
    assert IC.abs(IC.sub(b1, IC.mul(IC.make(2.0), s))) <= TOL
    assert IC.abs(IC.sub(b2, IC.mul(IC.make(3.0), s))) <= TOL
    assert IC.abs(IC.sub(IC.mul(b1, b2), IC.make(12.0))) <= TOL


def test_backward_dmul_one_sided():
    z, b2 = backward_dmul(IC, 2.0, 3.0, 8.0)
    assert z == 2 and b2 == 4  # discrete operand untouched, 8/2 exact


def test_backward_div_sqrt_split():
    b1, b2 = backward_div(IC, 1.0, 4.0, ("inl", 0.5))
    rt2 = IC.sqrt(IC.make(2.0))
    assert IC.abs(IC.sub(b1, rt2)) <= TOL
    assert IC.abs(IC.sub(b2, IC.mul(IC.make(2.0), rt2))) <= TOL
    assert IC.abs(IC.sub(IC.div(b1, b2), IC.make(0.5))) <= TOL


def test_backward_div_signed_target():
    # the scale-factor form keeps signs right where the naive sqrt pair cannot
    b1, b2 = backward_div(IC, -1.0, 4.0, ("inl", -0.2501))
    q = IC.div(b1, b2)
    assert IC.abs(IC.sub(q, IC.make(-0.2501))) <= TOL


def test_backward_div_error_branch_unchanged():
    assert backward_div(IC, 3.0, 0.0, ("inr",)) == (3, 0)


def test_backward_sub_fixed_point():
    assert backward_sub(IC, 3.0, 1.0, 2.0) == (3, 1)
    assert backward_sub(IC, 0.0, 0.0, 0.0) == (0, 0)


def test_backward_sub_scales_and_reproduces():
    t3 = 2.0000000000000004
    b1, b2 = backward_sub(IC, 3.0, 1.0, t3)
    t = IC.div(IC.make(t3), IC.make(2.0))
    assert b1 == IC.mul(IC.make(3.0), t)
    assert b2 == IC.mul(IC.make(1.0), t)
    # Property 2: the ideal difference reproduces the target
    assert IC.abs(IC.sub(IC.sub(b1, b2), IC.make(t3))) <= TOL


def test_primitive_backward_dispatch():
    assert primitive_backward("add", (1.0, 1.0), 2.5, IC) == (1.25, 1.25)
    assert sub_backward is backward_sub


# ---------------------------------------------------------------------------
# Whole-program backward evaluation
# ---------------------------------------------------------------------------

def test_backward_dotprod2_within_grades():
    a = analyze(load_program("dotprod2.bean"))
    env = num_env(a, x=[0.3, 0.7], y=[1.1, 2.9])
    approx = eval_approx(a.result.derivation, env)
    pert = backward_eval(a.result.derivation, env, approx, CFG)
    rerun = eval_ideal(a.result.derivation, pert, CFG)
    assert value_distance(rerun, value_to_ideal(approx, IC), IC) <= TOL
    rep = distances(env, pert, CFG)
    bound = IC.make(Fraction(3, 2) * CFG.eps)
    assert rep.lin["x"] <= bound and rep.lin["y"] <= bound


def test_backward_linsolve_discrete_unchanged():
    a = analyze(load_program("linsolve.bean"))
    env = num_env(a, A=[[3.0, 0.0], [1.5, 7.0]], b=[2.25, 4.5])
    approx = eval_approx(a.result.derivation, env)
    pert = backward_eval(a.result.derivation, env, approx, CFG)
    rerun = eval_ideal(a.result.derivation, pert, CFG)
    assert value_distance(rerun, value_to_ideal(approx, IC), IC) <= TOL
    rep = distances(env, pert, CFG)
    assert not any(rep.disc_changed.values())
    assert rep.lin["A"] <= IC.make(Fraction(5, 2) * CFG.eps)
    assert rep.lin["b"] <= IC.make(Fraction(3, 2) * CFG.eps)


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------

def test_distances_identical_env():
    a = analyze(load_program("dotprod2.bean"))
    env = num_env(a, x=[1.0, 2.0], y=[3.0, 4.0])
    rep = distances(env, Env(dict(env.disc), dict(env.lin)), CFG)
    assert all(d == 0 for d in rep.lin.values())
    assert not any(rep.disc_changed.values())


def test_distance_is_log_ratio():
    delta = 1e-16
    x = NumA(1.0)
    y = NumI(IC.exp(IC.make(delta)))
    d = value_distance(x, y, IC)
    assert IC.abs(IC.sub(d, IC.make(delta))) <= IC.make(1e-30)


def test_pair_distance_takes_max():
    delta = 3e-16
    a = PairV(NumA(1.0), NumA(2.0))
    b = PairV(NumI(IC.make(1.0)), NumI(IC.mul(IC.make(2.0), IC.exp(IC.make(delta)))))
    d = value_distance(a, b, IC)
    assert IC.abs(IC.sub(d, IC.make(delta))) <= IC.make(1e-30)


def test_distance_infinite_across_tags():
    d = value_distance(InlV(NumA(1.0)), InrV(NumA(1.0)), IC)
    assert d == gmpy2.mpfr("inf")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def test_value_json_round_trip():
    ty = parse_type_fragment("(num^2)^2")
    v = value_from_json([[1.0, 2.0], [3.0, 4.0]], ty, CFG)
    assert v == PairV(PairV(NumA(1.0), NumA(2.0)), PairV(NumA(3.0), NumA(4.0)))
    assert value_to_json(v, ty) == [[1.0, 2.0], [3.0, 4.0]]
    # untyped serialization keeps the binary nesting (grouping is ambiguous)
    assert value_to_json(v) == [[1.0, 2.0], [3.0, 4.0]]


def test_value_json_sum_and_unit():
    ty = parse_type_fragment("num + unit")
    assert value_from_json({"inl": 2.5}, ty, CFG) == InlV(NumA(2.5))
    assert value_from_json({"inr": None}, ty, CFG) == InrV(UNIT_V)
    assert value_to_json(InrV(UNIT_V)) == {"inr": None}


def test_value_json_flat_vector():
    ty = parse_type_fragment("num^3")
    v = value_from_json([1.0, 2.0, 3.0], ty, CFG)
    assert v == PairV(NumA(1.0), PairV(NumA(2.0), NumA(3.0)))
    assert value_to_json(v, ty) == [1.0, 2.0, 3.0]
    assert value_to_json(v) == [1.0, [2.0, 3.0]]


def test_value_json_shape_errors():
    from bean.errors import InputShapeError
    ty = parse_type_fragment("num^2")
    with pytest.raises(InputShapeError):
        value_from_json([1.0], ty, CFG)
    with pytest.raises(InputShapeError):
        value_from_json({"inl": 1.0}, ty, CFG)


def test_ideal_values_serialize_as_strings():
    v = NumI(IC.div(IC.make(1.0), IC.make(3.0)))
    s = value_to_json(v)
    assert isinstance(s, str) and s.startswith("0.333333333333333333")


def test_eval_approx_overflow_propagates():
    from bean.errors import ApproxOverflowError
    a = analyze("f (x : num) (y : num) := mul x y")
    env = Env(lin={"x": NumA(1e300), "y": NumA(1e300)})
    with pytest.raises(ApproxOverflowError):
        eval_approx(a.result.derivation, env)


def test_backward_accepts_perturbed_num_targets():
    # targets other than the approximate output, at finite distance
    import math
    import random
    from bean.numerics import rp_distance
    a = analyze(load_program("dotprod2.bean"))
    deriv = a.result.derivation
    rng = random.Random(17)
    for _ in range(50):
        env = Env(lin={
            "x": PairV(NumA(rng.uniform(0.1, 10)), NumA(rng.uniform(0.1, 10))),
            "y": PairV(NumA(rng.uniform(0.1, 10)), NumA(rng.uniform(0.1, 10)))})
        approx = eval_approx(deriv, env)
        delta = rng.uniform(-1, 1) * float(CFG.eps)
        target = NumA(approx.val * math.exp(delta))
        pert = backward_eval(deriv, env, target, CFG)
        rerun = eval_ideal(deriv, pert, CFG)
        # Property 2 against the perturbed target
        assert value_distance(rerun, value_to_ideal(target, IC), IC) <= TOL
        # Property 1 with slack: distance - grade <= output distance
        y_dist = rp_distance(approx.val, target.val, IC)
        rep = distances(env, pert, CFG)
        bound = IC.make(Fraction(3, 2) * CFG.eps)
        for name in ("x", "y"):
            assert rep.lin[name] - bound <= y_dist + TOL
