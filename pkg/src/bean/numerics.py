"""The two arithmetic worlds and the relative-precision metric.

Approximate arithmetic is native IEEE binary64 with round-to-nearest,
ties-to-even. Ideal arithmetic is MPFR (via gmpy2) at a configurable
significand width, 256 bits by default; its exponent range is so wide that
over/underflow is not a concern there. Distances between numbers are
measured in relative precision, d(x, y) = |ln(x/y)|, which is infinite
across sign changes and zero only at equal points.

The per-operation rounding bound is stated in terms of eps = u/(1-u) where
u is the unit roundoff: one rounding multiplies the exact result by e^delta
with |delta| <= eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr

from bean.errors import ApproxOverflowError

OPS = ("add", "sub", "mul", "div")

#: Marker for the error branch of division (div has type num + unit).
DIV_BY_ZERO = object()

_FLOAT_MIN_NORMAL = 2.2250738585072014e-308  # smallest normal binary64


def parse_uroundoff(text: str) -> Fraction:
    """Accept '2^-53', a ratio 'p/q', or a decimal string."""
    text = text.strip()
    if "^" in text:
        base, _, exp = text.partition("^")
        return Fraction(int(base)) ** int(exp)
    if "/" in text:
        num, _, den = text.partition("/")
        return Fraction(int(num), int(den))
    return Fraction(text)


@dataclass(frozen=True)
class RoundingConfig:
    """Unit roundoff and the precision used for the ideal semantics."""

    u: Fraction = Fraction(1, 2**53)
    ideal_bits: int = 256

    def __post_init__(self):
        if not (0 < self.u < 1):
            raise ValueError("unit roundoff must satisfy 0 < u < 1")
        if self.ideal_bits < 128:
            raise ValueError("ideal precision must be at least 128 bits")

    @property
    def eps(self) -> Fraction:
        return self.u / (1 - self.u)


def eps_value(cfg: RoundingConfig) -> Fraction:
    """eps = u/(1-u), exactly."""
    return cfg.eps


# ---------------------------------------------------------------------------
# Approximate world: binary64
# ---------------------------------------------------------------------------

def approx_op(op: str, a: float, b: float):
    """Correctly rounded binary64 operation.

    Division by zero returns ``DIV_BY_ZERO`` (the num+unit error branch);
    results outside the finite range raise, since the rounding model assumes
    no overflow.
    """
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ApproxOverflowError("operands must be finite")
    if op == "add":
        r = a + b
    elif op == "sub":
        r = a - b
    elif op == "mul":
        r = a * b
    elif op == "div":
        if b == 0.0:
            return DIV_BY_ZERO
        r = a / b
    else:
        raise ValueError(f"unknown operation {op!r}")
    if not math.isfinite(r):
        raise ApproxOverflowError(f"{op} overflowed binary64")
    return r


def is_subnormal(x: float) -> bool:
    return x != 0.0 and abs(x) < _FLOAT_MIN_NORMAL


# ---------------------------------------------------------------------------
# Ideal world: MPFR at cfg.ideal_bits
# ---------------------------------------------------------------------------

class IdealContext:
    """Round-to-nearest MPFR arithmetic at a fixed significand width."""

    def __init__(self, cfg: RoundingConfig):
        self.cfg = cfg
        self._ctx = gmpy2.context(
            precision=cfg.ideal_bits, round=gmpy2.RoundToNearest)

    def make(self, x) -> mpfr:
        """Construct a finite value (binary64 values embed exactly)."""
        if isinstance(x, Fraction):
            x = gmpy2.mpq(x.numerator, x.denominator)
        elif isinstance(x, str):
            pass
        elif isinstance(x, float) and not math.isfinite(x):
            raise ValueError("NaN and infinities are rejected")
        v = gmpy2.mpfr(x, self.cfg.ideal_bits)
        if not gmpy2.is_finite(v):
            raise ValueError("NaN and infinities are rejected")
        return v

    def add(self, a, b) -> mpfr:
        return self._ctx.add(a, b)

    def sub(self, a, b) -> mpfr:
        return self._ctx.sub(a, b)

    def mul(self, a, b) -> mpfr:
        return self._ctx.mul(a, b)

    def div(self, a, b) -> mpfr:
        return self._ctx.div(a, b)

    def sqrt(self, a) -> mpfr:
        return self._ctx.sqrt(a)

    def log(self, a) -> mpfr:
        return self._ctx.log(a)

    def exp(self, a) -> mpfr:
        return self._ctx.exp(a)

    def abs(self, a) -> mpfr:
        return self._ctx.abs(a)


BigNum = mpfr

INF = gmpy2.mpfr("inf")


def ideal_op(op: str, a, b, ictx: IdealContext):
    """The same operation table as ``approx_op`` at ideal precision."""
    a = ictx.make(a)
    b = ictx.make(b)
    if op == "add":
        return ictx.add(a, b)
    if op == "sub":
        return ictx.sub(a, b)
    if op == "mul":
        return ictx.mul(a, b)
    if op == "div":
        if b == 0:
            return DIV_BY_ZERO
        return ictx.div(a, b)
    raise ValueError(f"unknown operation {op!r}")


def rp_distance(x, y, ictx: IdealContext) -> mpfr:
    """Relative precision: |ln(x/y)| for same-sign nonzero pairs.

    Zero at (0, 0), infinite otherwise; negative zero is treated as +0.
    """
    x = ictx.make(x)
    y = ictx.make(y)
    if x == 0 and y == 0:
        return ictx.make(0.0)
    sx, sy = gmpy2.sign(x), gmpy2.sign(y)
    if sx != sy or sx == 0 or sy == 0:
        return INF
    if abs(x) < abs(y):  # canonical orientation: exact symmetry
        x, y = y, x
    return ictx.abs(ictx.log(ictx.div(x, y)))


# ---------------------------------------------------------------------------
# Display
# ---------------------------------------------------------------------------

def format_sig3(value: Fraction) -> str:
    """Exact 3-significant-digit scientific rendering, e.g. '5.55e-14'."""
    if value == 0:
        return "0.00e0"
    if value < 0:
        return "-" + format_sig3(-value)
    e10 = 0
    v = value
    while v >= 10:
        v /= 10
        e10 += 1
    while v < 1:
        v *= 10
        e10 -= 1
    # round v*100 half-to-even with integer arithmetic
    scaled = v * 100
    digits = scaled.numerator // scaled.denominator
    rem = scaled - digits
    if rem > Fraction(1, 2) or (rem == Fraction(1, 2) and digits % 2 == 1):
        digits += 1
    if digits == 1000:
        digits = 100
        e10 += 1
    return f"{digits // 100}.{digits % 100:02d}e{e10}"


def grade_to_decimal(grade, cfg: RoundingConfig) -> str:
    """Render a grade (a rational multiple of eps) at 3 significant digits."""
    coeff = grade.coeff if hasattr(grade, "coeff") else Fraction(grade)
    return format_sig3(coeff * cfg.eps)
