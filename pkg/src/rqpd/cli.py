"""Command-line entry point ``rqpd``.

Exit codes: 0 pass, 1 fail, 2 inconclusive, 64 usage or input errors.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import linalg as la
from .casebook import Options, UnknownScenario, export_fixture, list_scenarios, run_scenario
from .comparability import ComparabilityError, check_comparability, collect_constraints
from .coupling import CouplingProblem, max_coupling_value
from .judgment import Sampler, check_judgment, check_projective_judgment
from .lang import ParseError, WellFormednessError, parse_file
from .outline import POLICIES, check_outline
from .outline_io import OutlineFormatError, load_matrix, read_judgment, read_outline
from .semantics import run as run_program

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 64
STATUS_EXIT = {
    "pass": EXIT_PASS,
    "passed": EXIT_PASS,
    "verified": EXIT_PASS,
    "fail": EXIT_FAIL,
    "falsified": EXIT_FAIL,
    "refuted": EXIT_FAIL,
    "inconclusive": EXIT_INCONCLUSIVE,
}


class InputError(click.ClickException):
    exit_code = EXIT_USAGE


def _common(f):
    f = click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")(f)
    f = click.option("--tol", type=float, default=None, help="Numerical tolerance override.")(f)
    f = click.option("--samples", type=int, default=None, help="Sample count for sampled checks.")(f)
    f = click.option("--seed", type=int, default=0, show_default=True)(f)
    return f


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _matrix(path: str) -> np.ndarray:
    try:
        return load_matrix(_read_json(path))
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _program(path: str):
    try:
        return parse_file(path)
    except (OSError, ParseError, WellFormednessError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _emit(obj: dict, as_json: bool, text: str) -> None:
    click.echo(json.dumps(obj, indent=2, sort_keys=True) if as_json else text)


@click.group()
@click.version_option(package_name="artifact")
def cli():
    """Relational verification of quantum while-programs."""


@cli.command()
@click.argument("program", type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), help="Input density matrix (JSON); default |0...0>.")
@_common
def run(program, input_path, seed, samples, tol, as_json):
    """Run PROGRAM on an input state and print the output state."""
    p = _program(program)
    d = int(np.prod([r.dim for r in p.input_regs]))
    rho = _matrix(input_path) if input_path else la.proj(la.ket(0, d))
    if rho.shape != (d, d):
        raise InputError(f"input must be {d}x{d} for registers {[r.name for r in p.input_regs]}")
    out, regs = run_program(p, rho)
    obj = {"registers": [[r.name, r.dim] for r in regs], "trace": float(np.real(np.trace(out))), "output": la.to_json(out)}
    _emit(obj, as_json, f"registers: {', '.join(r.name for r in regs)}\ntrace: {obj['trace']:.12g}\n{np.array2string(np.round(out, 10), precision=10)}")


@cli.command()
@click.argument("judgment", type=click.Path(exists=True, dir_okay=False))
@_common
def check(judgment, seed, samples, tol, as_json):
    """Sample-check a judgment file (left/right programs, pre, post, gamma)."""
    try:
        j, projective = read_judgment(judgment)
    except (OutlineFormatError, ParseError, WellFormednessError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    sampler = Sampler(count=samples or 200, seed=seed)
    if projective:
        v = check_projective_judgment(j.p1, j.p2, j.pre, j.post, sampler)
    else:
        v = check_judgment(j, sampler)
    _emit(v.to_dict(), as_json, f"{v.status}: {v.samples_used} samples, worst margin {v.worst_margin:.3g} {v.counterexample_label}")
    sys.exit(STATUS_EXIT[v.status])


@cli.command()
@click.argument("outline", type=click.Path(exists=True, dir_okay=False))
@click.option("--policy", type=click.Choice(POLICIES), default="strict", show_default=True)
@_common
def prove(outline, policy, seed, samples, tol, as_json):
    """Check a proof outline file."""
    try:
        o = read_outline(outline)
    except (OutlineFormatError, ParseError, WellFormednessError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    rep = check_outline(o, policy, Sampler(count=samples or 50, seed=seed), tol if tol is not None else 1e-8)
    lines = [f"{rep.status} (policy {policy})"]
    for s in rep.steps:
        lines.append(f"  step {s.index} ({s.rule}): {s.status} residual={s.residual:.3g} {s.message}".rstrip())
        for ob in s.obligations:
            lines.append(f"    - {ob.kind}: {ob.status} [{ob.description}]")
    lines += [f"  note: {n}" for n in rep.notes]
    _emit(rep.to_dict(), as_json, "\n".join(lines))
    sys.exit(STATUS_EXIT[rep.status])


@cli.command()
@click.argument("rho1", type=click.Path(exists=True, dir_okay=False))
@click.argument("rho2", type=click.Path(exists=True, dir_okay=False))
@click.option("--objective", type=click.Path(exists=True, dir_okay=False), required=True, help="Observable on the product space (JSON).")
@click.option("--support", type=click.Path(exists=True, dir_okay=False), help="Restrict couplings to this projector.")
@click.option("--ppt", is_flag=True, help="Restrict to couplings with positive partial transpose.")
@_common
def coupling(rho1, rho2, objective, support, ppt, seed, samples, tol, as_json):
    """Maximize tr(A sigma) over couplings of RHO1 and RHO2."""
    try:
        prob = CouplingProblem(_matrix(rho1), _matrix(rho2), _matrix(objective), _matrix(support) if support else None, ppt)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    sol = max_coupling_value(prob)
    _emit(sol.to_dict(), as_json, f"{sol.status}: value {sol.value:.9g}")
    sys.exit(EXIT_PASS if sol.ok else EXIT_FAIL if sol.status == "infeasible" else EXIT_INCONCLUSIVE)


@cli.command()
@click.argument("p1", type=click.Path(exists=True, dir_okay=False))
@click.argument("p2", type=click.Path(exists=True, dir_okay=False))
@click.option("--check", "states", nargs=2, type=click.Path(exists=True, dir_okay=False), help="Two input density matrices (JSON).")
@click.option("--bound", type=click.Choice(["algorithm", "tight"]), default="algorithm", show_default=True)
@_common
def comparable(p1, p2, states, bound, seed, samples, tol, as_json):
    """Collect comparability constraints for two programs, optionally testing a pair of inputs."""
    try:
        c = collect_constraints(_program(p1), _program(p2), bound=bound)
    except ComparabilityError as exc:
        raise InputError(str(exc)) from exc
    obj = {"constraints": len(c)}
    text = f"{len(c)} constraints"
    code = EXIT_PASS
    if states:
        r1, r2 = _matrix(states[0]), _matrix(states[1])
        try:
            ok = check_comparability(c, r1, r2, tol if tol is not None else 1e-8)
            worst = float(np.max(c.residuals(r1, r2)))
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        obj.update(comparable=ok, worst_residual=worst)
        text += f"\n{'comparable' if ok else 'not comparable'} (worst residual {worst:.3g})"
        code = EXIT_PASS if ok else EXIT_FAIL
    _emit(obj, as_json, text)
    sys.exit(code)


@cli.group()
def casebook():
    """Bundled case studies."""


@casebook.command("list")
@click.option("--json", "as_json", is_flag=True)
def casebook_list(as_json):
    items = list_scenarios()
    _emit({"scenarios": items}, as_json, "\n".join(f"{s['id']:<30} {s['title']}" for s in items))


def _run_one(args):
    sid, seed, samples, tol = args
    return run_scenario(sid, Options(seed, samples, tol))


@casebook.command("run")
@click.argument("ids", nargs=-1, required=True)
@click.option("--serial", is_flag=True, help="Run scenarios one after another.")
@click.option("--runtime", is_flag=True, help="Include wall-clock runtime in JSON reports.")
@_common
def casebook_run(ids, serial, runtime, seed, samples, tol, as_json):
    """Run scenarios by id ("all" runs the whole catalog)."""
    known = [s["id"] for s in list_scenarios()]
    ids = known if ids == ("all",) else list(ids)
    unknown = [i for i in ids if i not in known]
    if unknown:
        raise InputError(f"unknown scenario(s): {', '.join(unknown)}")
    jobs = [(i, seed, samples, tol) for i in ids]
    workers = min(len(jobs), os.cpu_count() or 1)
    if serial or workers <= 1:
        reports = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers) as pool:
            reports = list(pool.map(_run_one, jobs))
    if as_json:
        payload = [r.to_dict(runtime) for r in reports]
        click.echo(json.dumps(payload[0] if len(payload) == 1 else payload, indent=2, sort_keys=True))
    else:
        click.echo("\n".join(r.summary() for r in reports))
    codes = [STATUS_EXIT[r.status] for r in reports]
    sys.exit(EXIT_FAIL if EXIT_FAIL in codes else max(codes))


@casebook.command("export")
@click.argument("sid")
@click.argument("directory", type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
def casebook_export(sid, directory, seed):
    """Write a scenario's programs and fixture JSON under DIRECTORY/<id>/."""
    try:
        paths = export_fixture(sid, directory, Options(seed))
    except UnknownScenario as exc:
        raise InputError(str(exc.args[0])) from exc
    click.echo("\n".join(str(p) for p in paths))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="rqpd", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_FAIL
    except SystemExit as exc:
        return int(exc.code or 0)
    return EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
