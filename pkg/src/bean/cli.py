"""Command-line surface: check, run, verify, bench.

Exit codes: 0 success, 1 type/scope/expansion error (and failed
verification), 2 parse error. ``--format json`` emits machine-readable
reports; verify output contains no timing, so a fixed seed reproduces
byte-identical JSON.
"""

from __future__ import annotations

import json
import sys
import click

from bean import harness, semantics
from bean.errors import BeanError, InputShapeError
from bean.numerics import (
    IdealContext,
    RoundingConfig,
    grade_to_decimal,
    parse_uroundoff,
)
from bean.syntax import parse_program, pretty_print_type
from bean.typecheck import Analysis, analyze_program


def _config(uroundoff: str, ideal_bits: int) -> RoundingConfig:
    return RoundingConfig(u=parse_uroundoff(uroundoff), ideal_bits=ideal_bits)


def _analyze_file(path: str, main_name: str | None) -> Analysis:
    with open(path, encoding="utf-8") as fh:
        source = fh.read()
    return analyze_program(parse_program(source, main_name))


def _fail(err: BeanError, path: str | None, fmt: str, command: str):
    if fmt == "json":
        payload = {
            "command": command,
            "ok": False,
            "error": {
                "code": err.code,
                "message": err.message,
                "span": str(err.span) if err.span else None,
            },
        }
        click.echo(json.dumps(payload))
    else:
        click.echo(err.render(path), err=True)
    sys.exit(err.exit_code)


def _common(fn):
    fn = click.option("--uroundoff", default="2^-53", show_default=True,
                      help="Unit roundoff: power of two like 2^-53, or a rational.")(fn)
    fn = click.option("--ideal-bits", default=256, show_default=True,
                      help="Significand bits of the ideal semantics.")(fn)
    fn = click.option("--format", "fmt", type=click.Choice(["text", "json"]),
                      default="text", show_default=True)(fn)
    return fn


@click.group()
@click.version_option()
def main():
    """Backward error analysis for first-order numerical programs."""


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--main", "main_name", default=None,
              help="Definition to analyze (defaults to the last one).")
@_common
def check(file, main_name, uroundoff, ideal_bits, fmt):
    """Infer per-parameter backward error bounds and the result type."""
    cfg = _config(uroundoff, ideal_bits)
    try:
        analysis = _analyze_file(file, main_name)
    except BeanError as err:
        _fail(err, file, fmt, "check")
    params = []
    for p in analysis.params:
        entry = {
            "name": p.name,
            "kind": p.kind,
            "type": pretty_print_type(p.ty, erase_disc=True),
            "type_exact": pretty_print_type(p.ty),
        }
        if not p.is_discrete:
            g = analysis.param_grade(p.name)
            entry["bound_eps"] = str(g.coeff)
            entry["bound_decimal"] = grade_to_decimal(g, cfg)
        params.append(entry)
    result_ty = analysis.result.ty
    if fmt == "json":
        click.echo(json.dumps({
            "command": "check",
            "ok": True,
            "file": file,
            "main": analysis.name,
            "result_type": pretty_print_type(result_ty, erase_disc=True),
            "result_type_exact": pretty_print_type(result_ty),
            "uroundoff": str(cfg.u),
            "ideal_bits": cfg.ideal_bits,
            "params": params,
        }))
        return
    click.echo(f"{analysis.name} : {pretty_print_type(result_ty, erase_disc=True)}")
    for p in params:
        if p["kind"] == "discrete":
            click.echo(f"  {p['name']} : {p['type']} (discrete; no backward error)")
        else:
            click.echo(f"  {p['name']} : {p['type']} @ {p['bound_eps']} eps "
                       f"({p['bound_decimal']})")


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--inputs", required=True,
              help="JSON array with one value per parameter, in order.")
@click.option("--main", "main_name", default=None)
@_common
def run(file, inputs, main_name, uroundoff, ideal_bits, fmt):
    """Evaluate under both semantics and report the output distance."""
    cfg = _config(uroundoff, ideal_bits)
    try:
        analysis = _analyze_file(file, main_name)
        try:
            data = json.loads(inputs)
        except json.JSONDecodeError as exc:
            raise InputShapeError(f"--inputs is not valid JSON: {exc}") from exc
        if not isinstance(data, list) or len(data) != len(analysis.params):
            raise InputShapeError(
                f"expected a JSON array of {len(analysis.params)} value(s)")
        env = semantics.Env()
        for p, item in zip(analysis.params, data):
            value = semantics.value_from_json(item, p.ty, cfg)
            (env.disc if p.is_discrete else env.lin)[p.name] = value
        deriv = analysis.result.derivation
        approx = semantics.eval_approx(deriv, env)
        ideal = semantics.eval_ideal(deriv, env, cfg)
    except BeanError as err:
        _fail(err, file, fmt, "run")
    ictx = IdealContext(cfg)
    dist = semantics.value_distance(
        semantics.value_to_ideal(approx, ictx), ideal, ictx)
    dist_str = f"{float(dist):.2e}" if float(dist) != float("inf") else "inf"
    if fmt == "json":
        click.echo(json.dumps({
            "command": "run",
            "ok": True,
            "file": file,
            "main": analysis.name,
            "approx": semantics.value_to_json(approx, analysis.result.ty),
            "ideal": semantics.value_to_json(ideal, analysis.result.ty),
            "rp_distance": dist_str,
        }))
        return
    click.echo(f"approx: {semantics.format_value(approx)}")
    click.echo(f"ideal:  {semantics.format_value(ideal)}")
    click.echo(f"rp distance: {dist_str}")


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--main", "main_name", default=None)
@click.option("--trials", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--signed", is_flag=True,
              help="Draw signed inputs (trials at infinite distance are excluded).")
@_common
def verify(file, main_name, trials, seed, signed, uroundoff, ideal_bits, fmt):
    """Randomized check of the inferred bounds (exit 0 iff no violations)."""
    cfg = _config(uroundoff, ideal_bits)
    try:
        analysis = _analyze_file(file, main_name)
        report = harness.verify_soundness(
            analysis, trials, seed=seed, cfg=cfg, signed=signed)
    except BeanError as err:
        _fail(err, file, fmt, "verify")
    payload = {
        "command": "verify",
        "ok": report.violations == 0,
        "file": file,
        "main": analysis.name,
        "trials": report.trials,
        "seed": seed,
        "violations": report.violations,
        "max_slack": report.max_slack,
        "underflow_trials": report.underflow_trials,
        "excluded_trials": report.excluded_trials,
        "uroundoff": str(cfg.u),
        "ideal_bits": cfg.ideal_bits,
    }
    if fmt == "json":
        click.echo(json.dumps(payload))
    else:
        click.echo(f"{analysis.name}: {report.trials} trials, "
                   f"{report.violations} violations, "
                   f"max slack {report.max_slack:.3f}, "
                   f"{report.underflow_trials} underflow, "
                   f"{report.excluded_trials} excluded")
        for failure in report.failures:
            click.echo(f"  violation: {failure}")
    sys.exit(0 if report.violations == 0 else 1)


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

@main.command()
@click.option("--only", default=None,
              type=click.Choice([k for k in harness.BENCHMARK_KINDS if k != "LinSolve2"]),
              help="Restrict to one benchmark family.")
@click.option("--trials", default=0, show_default=True,
              help="Optional soundness trials per row.")
@click.option("--seed", default=0, show_default=True)
@_common
def bench(only, trials, seed, uroundoff, ideal_bits, fmt):
    """Reproduce the benchmark bound table (and optionally run trials)."""
    cfg = _config(uroundoff, ideal_bits)
    rows = []
    for kind, n in harness.TABLE1_ROWS:
        if only and kind != only:
            continue
        spec = harness.BenchmarkSpec(kind, n)
        bc = harness.compare_bounds(spec, cfg)
        row = {
            "benchmark": kind,
            "size": n,
            "ops": bc.op_count,
            "inferred": bc.inferred_display,
            "standard": bc.standard_display,
            "match": bc.match,
            "trials": 0,
            "violations": 0,
            "max_slack": 0.0,
            "elapsed_ms": round(bc.elapsed_s * 1000, 3),
        }
        if trials:
            rep = harness.verify_soundness(
                harness.gen_benchmark(spec), trials, seed=seed, cfg=cfg)
            row.update(trials=rep.trials, violations=rep.violations,
                       max_slack=rep.max_slack)
        rows.append(row)
    if fmt == "json":
        click.echo(json.dumps({"command": "bench", "ok": True,
                               "uroundoff": str(cfg.u), "rows": rows}))
        return
    header = (f"{'Benchmark':<11}{'Size':>6}{'Ops':>8}  {'Bean':<10}{'Std.':<10}"
              f"{'Match':<7}{'Time(ms)':>9}")
    click.echo(header)
    click.echo("-" * len(header))
    for r in rows:
        click.echo(f"{r['benchmark']:<11}{r['size']:>6}{r['ops']:>8}  "
                   f"{r['inferred']:<10}{r['standard']:<10}"
                   f"{'yes' if r['match'] else 'NO':<7}{r['elapsed_ms']:>9.1f}")
        if r["trials"]:
            click.echo(f"{'':<11}{'':>6}{'':>8}  trials={r['trials']} "
                       f"violations={r['violations']} max_slack={r['max_slack']:.3f}")


if __name__ == "__main__":
    main()
