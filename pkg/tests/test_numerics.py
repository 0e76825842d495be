import math
import random
import struct
from fractions import Fraction

import gmpy2
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bean.errors import ApproxOverflowError
from bean.numerics import (
    DIV_BY_ZERO,
    INF,
    IdealContext,
    RoundingConfig,
    approx_op,
    eps_value,
    format_sig3,
    grade_to_decimal,
    ideal_op,
    parse_uroundoff,
    rp_distance,
)
from bean.typecheck import Grade


@pytest.fixture(scope="module")
def ictx():
    return IdealContext(RoundingConfig())


# ---------------------------------------------------------------------------
# Relative precision metric
# ---------------------------------------------------------------------------

def test_rp_identity(ictx):
    assert rp_distance(1.0, 1.0, ictx) == 0


def test_rp_sign_mismatch_is_infinite(ictx):
    assert rp_distance(1.0, -1.0, ictx) == INF
    assert rp_distance(0.0, 3.0, ictx) == INF


def test_rp_zero_pair(ictx):
    assert rp_distance(0.0, 0.0, ictx) == 0
    # negative zero normalizes to +0
    assert rp_distance(-0.0, 0.0, ictx) == 0


def test_rp_ln2(ictx):
    d = rp_distance(2.0, 1.0, ictx)
    assert math.isclose(float(d), math.log(2.0), rel_tol=1e-15)


finite_floats = st.floats(allow_nan=False, allow_infinity=False,
                          allow_subnormal=False, min_value=1e-300,
                          max_value=1e300)


@given(finite_floats, finite_floats)
def test_rp_symmetry(x, y):
    ictx = IdealContext(RoundingConfig())
    assert rp_distance(x, y, ictx) == rp_distance(y, x, ictx)


@given(finite_floats, finite_floats)
def test_rp_indiscernible(x, y):
    ictx = IdealContext(RoundingConfig())
    d = rp_distance(x, y, ictx)
    if x == y:
        assert d == 0
    else:
        assert d > 0


# ---------------------------------------------------------------------------
# Approximate (binary64) arithmetic
# ---------------------------------------------------------------------------

def test_add_ties_to_even():
    assert approx_op("add", 1.0, 2.0**-53) == 1.0


def test_add_representative_rounding():
    assert approx_op("add", 0.1, 0.2) == 0.30000000000000004


def test_div_by_zero_marker():
    assert approx_op("div", 1.0, 0.0) is DIV_BY_ZERO
    assert approx_op("div", 0.0, 0.0) is DIV_BY_ZERO


def test_overflow_is_an_error():
    with pytest.raises(ApproxOverflowError):
        approx_op("mul", 1e300, 1e300)
    with pytest.raises(ApproxOverflowError):
        approx_op("add", float("inf"), 1.0)


def _random_finite(rng: random.Random) -> float:
    while True:
        x = struct.unpack("<d", struct.pack("<Q", rng.getrandbits(64)))[0]
        if math.isfinite(x):
            return x


def test_approx_matches_softfloat_oracle():
    # bit-for-bit agreement with MPFR at 53 bits, round-to-nearest-even
    ctx53 = gmpy2.context(precision=53, round=gmpy2.RoundToNearest)
    fns = {"add": ctx53.add, "sub": ctx53.sub,
           "mul": ctx53.mul, "div": ctx53.div}
    rng = random.Random(20240901)
    checked = 0
    while checked < 100_000:
        a, b = _random_finite(rng), _random_finite(rng)
        op = rng.choice(("add", "sub", "mul", "div"))
        if op == "div" and b == 0.0:
            continue
        try:
            ours = approx_op(op, a, b)
        except ApproxOverflowError:
            continue
        want = fns[op](gmpy2.mpfr(a), gmpy2.mpfr(b))
        if not gmpy2.is_finite(want):
            continue
        # the 53-bit MPFR context has an unbounded exponent range, so skip
        # the subnormal band where binary64 loses precision or flushes;
        # the rounding model assumes no underflow anyway
        if want != 0 and abs(want) < 2.2250738585072014e-308:
            continue
        assert ours == want, (op, a.hex(), b.hex())
        assert math.copysign(1.0, ours) == math.copysign(1.0, float(want)) \
            or ours == 0.0
        checked += 1


def test_rounding_model_forward_bound():
    # rp(fl(x op y), x op y) <= eps, the per-operation guarantee
    cfg = RoundingConfig()
    ictx = IdealContext(cfg)
    eps = ictx.make(cfg.eps)
    rng = random.Random(7)
    for _ in range(3000):
        a = math.exp(rng.uniform(math.log(1e-5), math.log(1e5)))
        b = math.exp(rng.uniform(math.log(1e-5), math.log(1e5)))
        if rng.random() < 0.5:
            a = -a
        if rng.random() < 0.5:
            b = -b
        op = rng.choice(("add", "sub", "mul", "div"))
        approx = approx_op(op, a, b)
        exact = ideal_op(op, a, b, ictx)
        if approx is DIV_BY_ZERO:
            assert exact is DIV_BY_ZERO
            continue
        if approx == 0.0:
            continue  # exact zero or cancellation to zero: rp undefined/0
        assert rp_distance(approx, exact, ictx) <= eps


# ---------------------------------------------------------------------------
# Ideal arithmetic
# ---------------------------------------------------------------------------

def test_ideal_add_differs_from_binary64(ictx):
    r = ideal_op("add", 0.1, 0.2, ictx)
    assert float(r) != 0.1 + 0.2 or str(r) != repr(0.1 + 0.2)
    # agrees with the exact rational sum of the binary64 inputs
    exact = Fraction(0.1) + Fraction(0.2)
    assert r == gmpy2.mpq(exact.numerator, exact.denominator)


def test_ideal_mul_identity(ictx):
    x = ictx.make(3.7)
    assert ideal_op("mul", x, 1.0, ictx) == x


def test_ideal_div_by_zero(ictx):
    assert ideal_op("div", 1.5, 0.0, ictx) is DIV_BY_ZERO


def test_ideal_matches_rational_on_dyadics(ictx):
    # range-limited dyadics: add/sub/mul fit in 256 bits, so results are exact
    rng = random.Random(11)
    for _ in range(2000):
        a = rng.uniform(0.1, 1000.0)
        b = rng.uniform(0.1, 1000.0)
        for op, fn in (("add", lambda x, y: x + y),
                       ("sub", lambda x, y: x - y),
                       ("mul", lambda x, y: x * y)):
            got = ideal_op(op, a, b, ictx)
            want = fn(Fraction(a), Fraction(b))
            assert got == gmpy2.mpq(want.numerator, want.denominator)


def test_ideal_wide_span_within_precision(ictx):
    # when the exact result needs more than 256 bits, the error is < 2^-200
    a, b = 1.0, 2.0**-400
    got = ideal_op("add", a, b, ictx)
    want = Fraction(1) + Fraction(2) ** -400
    d = rp_distance(got, ictx.make(want), ictx)
    assert d <= ictx.make(Fraction(1, 2**200))


# ---------------------------------------------------------------------------
# eps and display
# ---------------------------------------------------------------------------

def test_eps_value_binary64():
    cfg = RoundingConfig()
    assert eps_value(cfg) == Fraction(1, 2**53 - 1)
    assert float(eps_value(cfg)) == 1.1102230246251568e-16


def test_eps_value_binary32_and_half():
    assert eps_value(RoundingConfig(u=Fraction(1, 2**24))) == Fraction(1, 2**24 - 1)
    assert eps_value(RoundingConfig(u=Fraction(1, 2))) == 1


def test_config_validation():
    with pytest.raises(ValueError):
        RoundingConfig(u=Fraction(2))
    with pytest.raises(ValueError):
        RoundingConfig(ideal_bits=64)


def test_parse_uroundoff():
    assert parse_uroundoff("2^-53") == Fraction(1, 2**53)
    assert parse_uroundoff("1/16777216") == Fraction(1, 2**24)
    assert parse_uroundoff("0.5") == Fraction(1, 2)


@pytest.mark.parametrize("coeff,want", [
    (500, "5.55e-14"),
    (0, "0.00e0"),
    (999, "1.11e-13"),
    (Fraction(3, 2), "1.67e-16"),
    (49, "5.44e-15"),
    (99, "1.10e-14"),
])
def test_grade_to_decimal(coeff, want):
    cfg = RoundingConfig()
    assert grade_to_decimal(Grade.of(coeff), cfg) == want
    assert grade_to_decimal(Fraction(coeff), cfg) == want


def test_format_sig3_edges():
    assert format_sig3(Fraction(9995, 10)) == "1.00e3"  # half-even bump
    assert format_sig3(Fraction(1)) == "1.00e0"
    assert format_sig3(Fraction(1, 8)) == "1.25e-1"


def test_ideal_rejects_non_finite():
    ictx = IdealContext(RoundingConfig())
    with pytest.raises(ValueError):
        ictx.make(float("nan"))
    with pytest.raises(ValueError):
        ictx.make(float("inf"))


def test_ideal_decimal_inputs_sum_close_to_decimal(ictx):
    # parsing "0.1"/"0.2" at 256 bits and adding gives 0.3 to 256-bit
    # accuracy, which binary64 cannot
    s = ictx.add(ictx.make("0.1"), ictx.make("0.2"))
    d = rp_distance(s, ictx.make("0.3"), ictx)
    assert d <= ictx.make(Fraction(1, 2**250))
    assert float(s) != 0.1 + 0.2  # the binary64 fold lands elsewhere
