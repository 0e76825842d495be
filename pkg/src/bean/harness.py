"""Benchmark generators, literature-bound comparison, soundness trials.

The generated programs put all backward error on a single linear input (the
remaining inputs are discrete), sum strictly left-to-right, and encode
vectors as right-nested tensors:

    DotProd(N)     x.z with error on x      ops 2N-1   bound N*eps
    Sum(N)         sum of one vector        ops N-1    bound (N-1)*eps
    Horner(N)      degree-N Horner scheme   ops 2N     bound 2N*eps
    PolyVal(N)     naive evaluation         ops N(N+3)/2   bound (N+1)*eps
    MatVecMul(N)   error on the matrix      ops 2N^2-N bound N*eps
    LinSolve2      2x2 lower-triangular solve (not in the bound table)

The soundness check draws inputs, runs the approximate evaluator, pulls the
output back through the backward map, reruns the ideal evaluator on the
perturbed inputs, and counts a violation when the ideal rerun misses the
approximate output (beyond 2^-200), a linear perturbation exceeds its
inferred grade, or a discrete input changes at all.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

from bean.errors import BackwardDomainError
from bean.numerics import (
    IdealContext,
    RoundingConfig,
    format_sig3,
    grade_to_decimal,
)
from bean.semantics import (
    Env,
    InlV,
    InrV,
    NumA,
    PairV,
    TrialFlags,
    UNIT_V,
    Value,
    backward_eval,
    distances,
    eval_approx,
    eval_ideal,
    value_distance,
    value_to_ideal,
)
from bean.syntax import ast, count_ops, parse_program
from bean.syntax.ast import Program
from bean.typecheck import Analysis, Grade, analyze_program

BENCHMARK_KINDS = ("DotProd", "Horner", "PolyVal", "MatVecMul", "Sum", "LinSolve2")

#: The (benchmark, size) matrix of the bound-comparison table (u = 2^-53).
TABLE1_ROWS = (
    ("DotProd", 20), ("DotProd", 50), ("DotProd", 100), ("DotProd", 500),
    ("Horner", 20), ("Horner", 50), ("Horner", 100), ("Horner", 500),
    ("PolyVal", 10), ("PolyVal", 20), ("PolyVal", 50), ("PolyVal", 100),
    ("MatVecMul", 5), ("MatVecMul", 10), ("MatVecMul", 20), ("MatVecMul", 50),
    ("Sum", 50), ("Sum", 100), ("Sum", 500), ("Sum", 1000),
)

#: Forward-bound comparison rows (u = 2^-52, relative condition number 1).
TABLE3_ROWS = (("Sum", 500), ("DotProd", 500), ("Horner", 500), ("PolyVal", 100))


@dataclass(frozen=True)
class BenchmarkSpec:
    kind: str
    n: int = 2

    def __post_init__(self):
        if self.kind not in BENCHMARK_KINDS:
            raise ValueError(f"unknown benchmark {self.kind!r}")
        if self.kind != "LinSolve2" and self.n < 1:
            raise ValueError("benchmark size must be >= 1")

    @property
    def linear_input(self) -> str:
        return {"DotProd": "x", "Horner": "a", "PolyVal": "a",
                "MatVecMul": "M", "Sum": "x", "LinSolve2": "A"}[self.kind]

    @property
    def op_count(self) -> int:
        n = self.n
        return {
            "DotProd": 2 * n - 1,
            "Horner": 2 * n,
            "PolyVal": n * (n + 3) // 2,
            "MatVecMul": 2 * n * n - n,
            "Sum": n - 1,
            "LinSolve2": 4,
        }[self.kind]


# ---------------------------------------------------------------------------
# Program generators
# ---------------------------------------------------------------------------

def _destructure(kw: str, var: str, names: list[str], lines: list[str]) -> None:
    """Emit a chain of pair-eliminations binding ``names`` from ``var``."""
    n = len(names)
    if n == 1:
        return  # a 1-vector is just a scalar; keep the variable itself
    cur = var
    for i in range(n - 2):
        rest = f"{var}r{i + 1}"
        lines.append(f"{kw} ({names[i]}, {rest}) = {cur} in")
        cur = rest
    lines.append(f"{kw} ({names[n - 2]}, {names[n - 1]}) = {cur} in")


def _sum_chain(terms: list[str], lines: list[str], prefix: str) -> str:
    """Strictly sequential left-to-right fold; returns the final expression."""
    acc = terms[0]
    for i, t in enumerate(terms[1:-1], start=1):
        s = f"{prefix}{i}"
        lines.append(f"let {s} = add {acc} {t} in")
        acc = s
    return f"add {acc} {terms[-1]}" if len(terms) > 1 else acc


def gen_benchmark(spec: BenchmarkSpec) -> Program:
    """Source text for the benchmark, parsed back into a program."""
    return parse_program(benchmark_source(spec))


def benchmark_source(spec: BenchmarkSpec) -> str:
    n = spec.n
    lines: list[str] = []
    if spec.kind == "DotProd":
        header = f"DotProd (x : num^{n}) {{z : num^{n}}} :="
        xs = [f"x{i}" for i in range(1, n + 1)]
        zs = [f"z{i}" for i in range(1, n + 1)]
        if n == 1:
            return f"{header}\ndmul z x\n"
        _destructure("dlet", "z", zs, lines)
        _destructure("let", "x", xs, lines)
        ps = []
        for i in range(1, n + 1):
            lines.append(f"let p{i} = dmul z{i} x{i} in")
            ps.append(f"p{i}")
        tail = _sum_chain(ps, lines, "s")
    elif spec.kind == "Sum":
        header = f"Sum (x : num^{n}) :="
        xs = [f"x{i}" for i in range(1, n + 1)]
        if n == 1:
            return f"{header}\nx\n"
        _destructure("let", "x", xs, lines)
        tail = _sum_chain(xs, lines, "s")
    elif spec.kind == "Horner":
        header = f"Horner (a : num^{n + 1}) {{z : num}} :="
        cs = [f"a{i}" for i in range(n + 1)]
        _destructure("let", "a", cs, lines)
        acc = f"a{n}"
        for k in range(n - 1, -1, -1):
            lines.append(f"let t{k + 1} = dmul z {acc} in")
            if k == 0:
                tail = f"add a0 t1"
            else:
                lines.append(f"let b{k} = add a{k} t{k + 1} in")
                acc = f"b{k}"
    elif spec.kind == "PolyVal":
        header = f"PolyVal (a : num^{n + 1}) {{z : num}} :="
        cs = [f"a{i}" for i in range(n + 1)]
        _destructure("let", "a", cs, lines)
        terms = ["a0"]
        for k in range(1, n + 1):
            cur = f"a{k}"
            for j in range(1, k + 1):
                u = f"u{k}_{j}"
                lines.append(f"let {u} = dmul z {cur} in")
                cur = u
            terms.append(cur)
        tail = _sum_chain(terms, lines, "s")
    elif spec.kind == "MatVecMul":
        header = f"MatVecMul (M : (num^{n})^{n}) {{v : num^{n}}} :="
        if n == 1:
            return f"MatVecMul (M : num) {{v : num}} :=\ndmul v M\n"
        vs = [f"v{j}" for j in range(1, n + 1)]
        _destructure("dlet", "v", vs, lines)
        rows = [f"r{i}" for i in range(1, n + 1)]
        _destructure("let", "M", rows, lines)
        outs = []
        for i in range(1, n + 1):
            ms = [f"m{i}_{j}" for j in range(1, n + 1)]
            _destructure("let", f"r{i}", ms, lines)
            ps = []
            for j in range(1, n + 1):
                lines.append(f"let p{i}_{j} = dmul v{j} m{i}_{j} in")
                ps.append(f"p{i}_{j}")
            acc = ps[0]
            for j, t in enumerate(ps[1:], start=1):
                w = f"w{i}_{j}"
                lines.append(f"let {w} = add {acc} {t} in")
                acc = w
            outs.append(acc)
        tail = "(" + ", ".join(outs) + ")"
    elif spec.kind == "LinSolve2":
        return LINSOLVE2_SOURCE
    else:
        raise ValueError(spec.kind)
    return header + "\n" + "\n".join(lines) + "\n" + tail + "\n"


LINSOLVE2_SOURCE = """\
// 2x2 lower-triangular solve; a01 is carried but unused (assumed zero).
LinSolve (A : (num^2)^2) (b : num^2) :=
let (r0, r1) = A in
let (a00, a01) = r0 in
let (a10, a11) = r1 in
let (b0, b1) = b in
let x0_or_err = div b0 a00 in
case x0_or_err of
  inl (x0) =>
    dlet d_x0 = !x0 in
    let s0 = dmul d_x0 a10 in
    let s1 = sub b1 s0 in
    let x1_or_err = div s1 a11 in
    case x1_or_err of
      inl (x1) => inl (d_x0, x1)
    | inr (e1) => inr e1
| inr (e0) => inr e0
"""


# ---------------------------------------------------------------------------
# Bounds
# ---------------------------------------------------------------------------

def standard_bound(spec: BenchmarkSpec) -> Grade:
    """Worst-case relative componentwise bound from the literature."""
    n = spec.n
    coeff = {
        "DotProd": Fraction(n),
        "Sum": Fraction(n - 1),
        "Horner": Fraction(2 * n),
        "MatVecMul": Fraction(n),
        "PolyVal": Fraction(n + 1),
    }.get(spec.kind)
    if coeff is None:
        raise ValueError(f"no literature bound wired up for {spec.kind}")
    return Grade(coeff)


@dataclass
class BoundComparison:
    spec: BenchmarkSpec
    inferred: Grade
    standard: Grade
    inferred_display: str
    standard_display: str
    op_count: int
    elapsed_s: float

    @property
    def match(self) -> bool:
        return self.inferred_display == self.standard_display


def compare_bounds(spec: BenchmarkSpec,
                   cfg: RoundingConfig | None = None) -> BoundComparison:
    """Generate, infer, and compare against the literature bound."""
    import time

    cfg = cfg or RoundingConfig()
    program = gen_benchmark(spec)
    t0 = time.perf_counter()
    analysis = analyze_program(program)
    elapsed = time.perf_counter() - t0
    inferred = analysis.param_grade(spec.linear_input)
    std = standard_bound(spec)
    return BoundComparison(
        spec=spec,
        inferred=inferred,
        standard=std,
        inferred_display=grade_to_decimal(inferred, cfg),
        standard_display=grade_to_decimal(std, cfg),
        op_count=count_ops(analysis.body),
        elapsed_s=elapsed,
    )


def forward_bound_from_kappa(backward: Grade, kappa,
                             cfg: RoundingConfig | None = None) -> str:
    """forward <= kappa * backward, displayed at 3 significant digits."""
    cfg = cfg or RoundingConfig()
    if kappa < 0:
        raise ValueError("condition numbers are nonnegative")
    return format_sig3(Fraction(kappa) * backward.coeff * cfg.eps)


# ---------------------------------------------------------------------------
# Randomized soundness trials
# ---------------------------------------------------------------------------

@dataclass
class TrialReport:
    trials: int = 0
    violations: int = 0
    max_slack: float = 0.0
    underflow_trials: int = 0
    excluded_trials: int = 0  # signed mode: target at infinite distance
    failures: list = field(default_factory=list)

    def merge(self, other: "TrialReport") -> "TrialReport":
        return TrialReport(
            self.trials + other.trials,
            self.violations + other.violations,
            max(self.max_slack, other.max_slack),
            self.underflow_trials + other.underflow_trials,
            self.excluded_trials + other.excluded_trials,
            self.failures + other.failures,
        )


def draw_value(ty: ast.Ty, rng: random.Random, signed: bool = False) -> Value:
    """Log-uniform magnitudes in [0.1, 1000]; positive unless ``signed``."""
    match ty:
        case ast.NumT() | ast.DiscT(ast.NumT()):
            mag = math.exp(rng.uniform(math.log(0.1), math.log(1000.0)))
            if signed and rng.random() < 0.5:
                mag = -mag
            return NumA(mag)
        case ast.UnitT():
            return UNIT_V
        case ast.TensorT(l, r):
            return PairV(draw_value(l, rng, signed), draw_value(r, rng, signed))
        case ast.SumT(l, r):
            if rng.random() < 0.5:
                return InlV(draw_value(l, rng, signed))
            return InrV(draw_value(r, rng, signed))
        case ast.DiscT(inner):
            return draw_value(inner, rng, signed)
    raise ValueError(f"cannot draw a value of type {ty!r}")


def draw_env(analysis: Analysis, rng: random.Random, signed: bool = False) -> Env:
    env = Env()
    for p in analysis.params:
        v = draw_value(p.ty, rng, signed)
        (env.disc if p.is_discrete else env.lin)[p.name] = v
    return env


def soundness_tolerance(cfg: RoundingConfig) -> Fraction:
    """Output-distance budget for the ideal rerun: 2^-200 at 256 bits.

    The backward map rounds at cfg.ideal_bits, so the tolerance keeps a
    fixed 56-bit headroom over the ideal precision for error accumulation
    across the ops of a program.
    """
    return Fraction(1, 2 ** (cfg.ideal_bits - 56))


def run_trial(analysis: Analysis, env: Env, cfg: RoundingConfig,
              tol: Fraction | None = None) -> tuple[str, float, str]:
    """One soundness trial.

    Returns (status, slack, failure-description) with status one of
    ``ok`` / ``violation`` / ``underflow`` (the rounding model's guarantee
    is void) / ``excluded`` (target at infinite distance: signed inputs
    only).
    """
    if tol is None:
        tol = soundness_tolerance(cfg)
    deriv = analysis.result.derivation
    ictx = IdealContext(cfg)
    flags = TrialFlags()
    approx_out = eval_approx(deriv, env, flags)
    try:
        perturbed = backward_eval(deriv, env, approx_out, cfg)
    except BackwardDomainError as exc:
        return ("underflow" if flags.underflow else "excluded"), 0.0, str(exc)
    ideal_out = eval_ideal(deriv, perturbed, cfg)

    failure = ""
    out_dist = value_distance(ideal_out, value_to_ideal(approx_out, ictx), ictx)
    if not (out_dist <= ictx.make(tol)):
        failure = f"ideal rerun missed the target by {out_dist}"

    report = distances(env, perturbed, cfg)
    slack = 0.0
    if not failure:
        for name, dist in report.lin.items():
            bound = analysis.param_grade(name).coeff * cfg.eps
            if bound == 0:
                if dist != 0:
                    failure = f"{name} perturbed despite a zero bound"
                    break
            else:
                ratio = float(dist / ictx.make(bound))
                slack = max(slack, ratio)
                if not (dist <= ictx.make(bound)):
                    failure = f"{name} moved {dist}, bound {float(bound)}"
                    break
    if not failure:
        for name, changed in report.disc_changed.items():
            if changed:
                failure = f"discrete input {name} changed"
                break
    if flags.underflow:
        return "underflow", slack, failure
    return ("ok" if failure == "" else "violation"), slack, failure


def verify_soundness(program: Program | Analysis, trials: int,
                     seed: int = 0, cfg: RoundingConfig | None = None,
                     signed: bool = False) -> TrialReport:
    """Randomized check of the backward error guarantee on one program."""
    cfg = cfg or RoundingConfig()
    analysis = program if isinstance(program, Analysis) else analyze_program(program)
    rng = random.Random(seed)
    report = TrialReport()
    for _ in range(trials):
        env = draw_env(analysis, rng, signed)
        report.trials += 1
        status, slack, failure = run_trial(analysis, env, cfg)
        if status in ("ok", "violation"):
            report.max_slack = max(report.max_slack, slack)
        if status == "underflow":
            report.underflow_trials += 1
        elif status == "excluded":
            # signed inputs can put the target at infinite distance (e.g. an
            # approximate zero against a nonzero ideal counterpart); the
            # rounding model assumes away these regions
            report.excluded_trials += 1
        elif status == "violation":
            report.violations += 1
            if len(report.failures) < 10:
                report.failures.append(failure)
    return report


#: Default trial allocation for the acceptance-level soundness run
#: (>= 10^4 trials total, >= 1000 per benchmark, sizes capped at 100).
SOUNDNESS_SUITE = (
    (BenchmarkSpec("Sum", 50), 1500),
    (BenchmarkSpec("Sum", 100), 1000),
    (BenchmarkSpec("DotProd", 20), 1500),
    (BenchmarkSpec("DotProd", 100), 1000),
    (BenchmarkSpec("Horner", 20), 1500),
    (BenchmarkSpec("Horner", 100), 1000),
    (BenchmarkSpec("PolyVal", 10), 1500),
    (BenchmarkSpec("PolyVal", 30), 1000),
    (BenchmarkSpec("MatVecMul", 5), 1500),
    (BenchmarkSpec("MatVecMul", 10), 1000),
    (BenchmarkSpec("LinSolve2", 2), 1000),
)


def run_soundness_suite(seed: int = 0, cfg: RoundingConfig | None = None):
    """(total report, per-benchmark reports) over the default allocation."""
    cfg = cfg or RoundingConfig()
    total = TrialReport()
    rows = []
    for spec, trials in SOUNDNESS_SUITE:
        analysis = analyze_program(gen_benchmark(spec))
        rep = verify_soundness(analysis, trials, seed=seed, cfg=cfg)
        rows.append((spec, rep))
        total = total.merge(rep)
    return total, rows
