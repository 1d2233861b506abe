"""Registry of reproducible case studies.

A scenario builds its programs (as ``.qw`` text), its named predicates and a
list of checks.  Every check states the value it expects and where that
expectation comes from: ``reference`` (a published claim), ``trivial``
(follows from the definitions) or ``derived`` (computed independently here).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .. import linalg as la
from ..comparability import ConstraintSet, check_comparability, collect_constraints, profile_gap, sample_comparable
from ..coupling import CouplingProblem, lifting_exists, max_coupling_value
from ..judgment import (
    Judgment,
    Sampler,
    Separability,
    Verdict,
    check_judgment,
    check_projective_judgment,
    loop_effects,
)
from ..lang.ast import Skip
from ..lang.builtins import H, Z
from ..outline import check_outline
from ..outline_io import outline_from_json, predicate_to_json
from ..rules import Context, RuleInstance, derive
from ..semantics import Configuration, is_lossless, run, step
from ..spaces import Register, RegOp, lookup, reduce_to
from . import programs as pg

PROVENANCE = ("reference", "trivial", "derived")
STATUSES = ("pass", "fail", "inconclusive")


class UnknownScenario(KeyError):
    pass


@dataclass
class Options:
    seed: int = 0
    samples: Optional[int] = None
    tol: Optional[float] = None

    def count(self, default: int) -> int:
        return default if self.samples is None else self.samples

    def tolerance(self, default: float) -> float:
        return default if self.tol is None else self.tol

    def rng(self, *stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, *stream])


@dataclass
class Outcome:
    status: str
    residual: Optional[float] = None
    detail: dict = field(default_factory=dict)


@dataclass
class Check:
    name: str
    expected: str
    provenance: str
    run: Callable[[], Outcome]

    def __post_init__(self):
        if self.provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance tag {self.provenance!r}")


@dataclass
class CheckResult:
    name: str
    status: str
    residual: Optional[float]
    expected: str
    provenance: str
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "status": self.status,
            "residual": _clean(self.residual),
            "expected": self.expected,
            "provenance": self.provenance,
            "detail": _clean(self.detail),
        }


@dataclass
class Build:
    programs: dict[str, str]
    predicates: dict[str, RegOp]
    checks: list[Check]
    extra: dict = field(default_factory=dict)


@dataclass
class Scenario:
    id: str
    title: str
    build: Callable[[Options], Build]


@dataclass
class Report:
    scenario: str
    title: str
    seed: int
    checks: list[CheckResult]
    runtime: float = 0.0

    @property
    def status(self) -> str:
        statuses = {c.status for c in self.checks}
        if "fail" in statuses:
            return "fail"
        if "inconclusive" in statuses:
            return "inconclusive"
        return "pass"

    def to_dict(self, include_runtime: bool = False) -> dict:
        out = {
            "scenario": self.scenario,
            "title": self.title,
            "seed": self.seed,
            "status": self.status,
            "checks": [c.to_dict() for c in self.checks],
        }
        if include_runtime:
            out["runtime_seconds"] = round(self.runtime, 3)
        return out

    def to_json(self, include_runtime: bool = False) -> str:
        return json.dumps(self.to_dict(include_runtime), indent=2, sort_keys=True)

    def summary(self) -> str:
        lines = [f"{self.scenario}: {self.status.upper()}"]
        for c in self.checks:
            res = "" if c.residual is None else f"  residual={_fmt(c.residual)}"
            lines.append(f"  [{c.status:^12}] {c.name}{res}")
        return "\n".join(lines)


def _fmt(x: float) -> str:
    return f"{x:.3g}"


def _clean(x):
    """JSON-safe values rounded to 9 significant digits so reports are stable across BLAS builds."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not np.isfinite(x):
            return str(x)
        return float(f"{x:.9g}") if x != 0 else 0.0
    return x


# outcome helpers ------------------------------------------------------------------------

def _at_most(value: float, tol: float, **detail) -> Outcome:
    return Outcome("pass" if value <= tol else "fail", float(value), detail)


def _at_least(value: float, bound: float, **detail) -> Outcome:
    return Outcome("pass" if value >= bound else "fail", float(value), detail)


def _expect_verdict(v: Verdict, want: str = "passed", min_margin: float = -1e-6) -> Outcome:
    detail = {"verdict": v.status, "samples_used": v.samples_used, "counterexample": v.counterexample_label, "notes": v.notes}
    if v.status == "inconclusive" and want != "inconclusive":
        return Outcome("inconclusive", v.worst_margin, detail)
    ok = v.status == want
    if ok and want == "passed":
        ok = v.worst_margin >= min_margin
    return Outcome("pass" if ok else "fail", v.worst_margin, detail)


def _all(outcomes: list[Outcome], **detail) -> Outcome:
    statuses = [o.status for o in outcomes]
    status = "fail" if "fail" in statuses else "inconclusive" if "inconclusive" in statuses else "pass"
    residuals = [o.residual for o in outcomes if o.residual is not None]
    worst = min(residuals) if residuals else None
    return Outcome(status, worst, {"parts": [o.detail for o in outcomes], **detail})


def _regs(*spec: tuple[str, int]) -> tuple[Register, ...]:
    return tuple(Register(n, d) for n, d in spec)


def _restricted_choi(fn, keep: tuple[Register, ...], fill: np.ndarray) -> np.ndarray:
    """Choi matrix of ``rho -> fn(rho (x) fill)`` with ``keep`` listed first among the inputs."""
    d = int(np.prod([r.dim for r in keep]))
    out = None
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1
            y = fn(np.kron(e, fill))
            block = np.kron(e, y)
            out = block if out is None else out + block
    return out


# scenarios ------------------------------------------------------------------------------

REGISTRY: dict[str, Scenario] = {}


def scenario(sid: str, title: str):
    def register(fn: Callable[[Options], Build]):
        REGISTRY[sid] = Scenario(sid, title, fn)
        return fn

    return register


MIXED_INPUT = np.array([[5, 1], [1, 1]]) / 6
PAIR = _regs(("q<1>", 2), ("q<2>", 2))


def working_outline_json() -> dict:
    """Proof outline for the working example, in the outline file format."""
    meas_right = {"ref": "1"}
    return {
        "name": "working-example",
        "left": "P1.qw",
        "right": "P2.qw",
        "predicates": {
            k: predicate_to_json(v)
            for k, v in _working_predicates().items()
            if k in ("EqB", "I", "B", "Sym")
        },
        "segments": [
            {
                "rule": {"rule": "Conseq", "left": "0", "right": "0", "premises": {"inner": {"rule": "Init", "left": "0", "right": "0"}}, "payload": {"pre": "EqB"}},
                "pre": "EqB",
                "post": "I",
            },
            {
                "rule": {
                    "rule": "Weaken",
                    "left": "1",
                    "premises": {"inner": {"rule": "UT-L", "left": "1"}},
                    "payload": {"gamma": [{"kind": "meas", "left": {"program": "right", "ref": "1", "regs": ["q"]}, "right": meas_right}]},
                },
                "pre": "I",
                "post": "I",
                "gamma": [{"kind": "meas", "left": {"program": "right", "ref": "1", "regs": ["q"]}, "right": meas_right}],
            },
            {
                "rule": {
                    "rule": "IF1",
                    "left": "2",
                    "right": "1",
                    "premises": {"0": {"rule": "UT", "left": "2/0", "right": "1/0"}, "1": {"rule": "UT", "left": "2/1", "right": "1/1"}},
                    "payload": {"pre": "I"},
                },
                "pre": "I",
                "post": "B",
                "gamma": [{"kind": "meas", "left": {"ref": "2"}, "right": meas_right}],
            },
            {"rule": {"rule": "UT-R", "right": "2"}, "pre": "B", "post": "Sym"},
        ],
    }


def _working_predicates() -> dict[str, RegOp]:
    hr = la.tensor(np.eye(2), H)
    return {
        "EqB": RegOp(la.basis_identity(np.eye(2)), PAIR),
        "Sym": RegOp(la.sym_projector(2), PAIR),
        "I": RegOp(np.eye(4), PAIR),
        "B": RegOp(0.5 * (np.eye(4) + hr @ la.swap_operator(2) @ hr), PAIR),
        "SevenEighths": RegOp(7 / 8 * np.eye(4), PAIR),
    }


@scenario("working-example", "Working example: basis equality implies symmetric equality")
def _working_example(opts: Options) -> Build:
    srcs = {"P1": pg.working_left(), "P2": pg.working_right(), "Q1": pg.working_if_left(), "Q2": pg.working_if_right()}
    p1, p2 = pg.load(srcs["P1"]), pg.load(srcs["P2"])
    q1, q2 = pg.load(srcs["Q1"]), pg.load(srcs["Q2"])
    preds = _working_predicates()
    tol = opts.tolerance(1e-10)

    def semantics_p():
        want = np.array([[1, -1], [-1, 3]]) / 4
        e1 = la.max_abs(run(p1, MIXED_INPUT)[0] - want)
        e2 = la.max_abs(run(p2, MIXED_INPUT)[0] - want)
        return _at_most(max(e1, e2), tol, left_error=e1, right_error=e2)

    def semantics_q():
        want = np.array([[1, -1], [-1, 2]]) / 3
        return _at_most(la.max_abs(run(q2, MIXED_INPUT)[0] - want), tol)

    outline = outline_from_json({**working_outline_json(), "left_source": srcs["P1"], "right_source": srcs["P2"]})
    state = {}

    def outline_check():
        rep = check_outline(outline, "strict", Sampler(count=opts.count(30), seed=opts.seed))
        state["report"] = rep
        worst = max((s.residual for s in rep.steps), default=0.0)
        status = {"verified": "pass", "refuted": "fail"}.get(rep.status, "inconclusive")
        return Outcome(status, worst, {"outline": rep.status, "steps": [f"{s.rule}:{s.status}" for s in rep.steps]})

    def conclusion_check():
        rep = state.get("report") or check_outline(outline, "strict", Sampler(count=opts.count(30), seed=opts.seed))
        if rep.conclusion is None:
            return Outcome("fail", None, {"reason": "outline did not verify"})
        v = check_judgment(rep.conclusion, Sampler(count=opts.count(200), seed=opts.seed))
        return _expect_verdict(v, "passed", -1e-6)

    def basis_post_control():
        v = check_judgment(Judgment(p1, p2, preds["EqB"], preds["EqB"]), Sampler(count=opts.count(50), seed=opts.seed))
        return _expect_verdict(v, "falsified")

    def if_all_pairs():
        (init1, had, ifl), (init2, ifr, _) = p1.body.stmts, p2.body.stmts
        ctx0 = Context.of_programs(p1, p2)
        ctx1 = ctx0.after(init1, init2)
        prem = {(m, n): RuleInstance("UT", ifl.branch(m), ifr.branch(n)) for m in (0, 1) for n in (0, 1)}
        d_if = derive(RuleInstance("IF", ifl, ifr, prem), preds["B"], ctx1.after(had, Skip()))
        d_h = derive(RuleInstance("UT-L", had), d_if.pre, ctx1)
        d_init = derive(RuleInstance("Init", init1, init2), d_h.pre, ctx0)
        init_pre_error = la.max_abs(d_init.pre.on(PAIR) - preds["SevenEighths"].on(PAIR))
        segs = [
            {"rule": {"rule": "Conseq", "left": "0", "right": "0", "premises": {"inner": {"rule": "Init", "left": "0", "right": "0"}}, "payload": {"pre": "EqB"}}, "pre": "EqB", "post": "H"},
            {"rule": {"rule": "UT-L", "left": "1"}, "pre": "H", "post": "X"},
            {
                "rule": {"rule": "IF", "left": "2", "right": "1", "premises": {f"{m},{n}": {"rule": "UT", "left": f"2/{m}", "right": f"1/{n}"} for m in (0, 1) for n in (0, 1)}},
                "pre": "X",
                "post": "B",
            },
            {"rule": {"rule": "UT-R", "right": "2"}, "pre": "B", "post": "Sym"},
        ]
        outline_obj = {
            "left_source": srcs["P1"],
            "right_source": srcs["P2"],
            "predicates": {
                "EqB": predicate_to_json(preds["EqB"]),
                "H": predicate_to_json(d_h.pre),
                "X": predicate_to_json(d_if.pre),
                "B": predicate_to_json(preds["B"]),
                "Sym": predicate_to_json(preds["Sym"]),
            },
            "segments": segs,
        }
        rep = check_outline(outline_from_json(outline_obj), "strict")
        loewner = [o for o in rep.obligations if o.kind == "loewner" and o.status == "failed"]
        residual = loewner[0].residual if loewner else 0.0
        ok = rep.status == "refuted" and loewner and abs(residual + 0.125) <= 1e-9 and init_pre_error <= 1e-10
        return Outcome("pass" if ok else "fail", residual, {"outline": rep.status, "init_pre_error": init_pre_error})

    checks = [
        Check("semantics of P1 and P2 on the mixed input", "both outputs equal [[1,-1],[-1,3]]/4", "reference", semantics_p),
        Check("semantics of Q2 on the mixed input", "output equals [[1,-1],[-1,2]]/3", "reference", semantics_q),
        Check("outline verifies under the strict policy", "verified", "reference", outline_check),
        Check("concluded judgment survives sampling", "passed with worst margin >= -1e-6 on 200 pure samples", "reference", conclusion_check),
        Check("basis equality is not preserved", "judgment with basis-equality postcondition is falsified", "derived", basis_post_control),
        Check("two-sided IF over all pairs is too weak", "precondition 7/8 I fails the Loewner obligation by -0.125", "reference", if_all_pairs),
    ]
    return Build(srcs, preds, checks, {"outline": working_outline_json()})


@scenario("semantics-basics", "Measurement arithmetic on the mixed input")
def _semantics_basics(opts: Options) -> Build:
    srcs = {"Q2": pg.working_if_right()}
    q2 = pg.load(srcs["Q2"])
    tol = opts.tolerance(1e-12)

    def arithmetic():
        branches = dict(step(Configuration(q2.body, MIXED_INPUT, q2.input_regs)))
        p0 = np.real(np.trace(branches[0].state))
        p1 = np.real(np.trace(branches[1].state))
        plus, minus = np.array([1, 1]) / np.sqrt(2), np.array([1, -1]) / np.sqrt(2)
        errs = [
            abs(p0 - 2 / 3),
            abs(p1 - 1 / 3),
            la.max_abs(branches[0].state / p0 - la.proj(plus)),
            la.max_abs(branches[1].state / p1 - la.proj(minus)),
        ]
        return _at_most(max(errs), tol, p0=p0, p1=p1)

    def lossless():
        rep = is_lossless(q2)
        return Outcome("pass" if rep.lossless else "fail", rep.trace_defect)

    return Build(
        srcs,
        {"rho": RegOp(MIXED_INPUT, _regs(("q", 2)))},
        [
            Check("outcome probabilities and post-measurement states", "p(0)=2/3 with |+>, p(1)=1/3 with |->", "reference", arithmetic),
            Check("Q2 is lossless", "trace preserved", "trivial", lossless),
        ],
    )


@scenario("uniformity-prop", "Uniformity by coupling, three equivalent characterizations (d = 2, 3)")
def _uniformity(opts: Options) -> Build:
    srcs, preds, checks = {}, {}, []
    for d in (2, 3):
        srcs[f"depolarize{d}"] = pg.depolarize(d)
        srcs[f"identity{d}"] = pg.identity_program(d)
        pair = _regs(("q<1>", d), ("q<2>", d))
        preds[f"pre_uniform{d}"] = RegOp(np.eye(d * d) / d, pair)
        preds[f"pre_entangled{d}"] = RegOp(la.proj(la.max_entangled(d)), pair)
        for i in range(d):
            preds[f"post{d}_{i}"] = RegOp(np.kron(la.proj(la.ket(i, d)), np.eye(d)), pair)
        sep = Separability((("q<1>",), ("q<2>",)))

        def clause1(d=d, name="depolarize"):
            prog = pg.load(srcs[f"{name}{d}"])
            worst = 0.0
            for k in range(20):
                out, _ = run(prog, la.random_density(d, opts.rng(d, k)))
                worst = max(worst, float(np.max(np.abs(np.real(np.diag(out)) - 1 / d))))
            return worst

        def clause2(d=d, name="depolarize"):
            prog = pg.load(srcs[f"{name}{d}"])
            return [
                check_judgment(Judgment(prog, prog, preds[f"pre_uniform{d}"], preds[f"post{d}_{i}"]), Sampler(count=opts.count(40), seed=opts.seed))
                for i in range(d)
            ]

        def clause3(d=d, name="depolarize", sep=sep):
            prog = pg.load(srcs[f"{name}{d}"])
            return [
                check_judgment(
                    Judgment(prog, prog, preds[f"pre_entangled{d}"], preds[f"post{d}_{i}"], (sep,)),
                    Sampler(count=opts.count(40), seed=opts.seed),
                )
                for i in range(d)
            ]

        checks += [
            Check(f"d={d}: outputs are uniform in the computational basis", "every diagonal entry equals 1/d", "reference", lambda c=clause1: _at_most(c(), 1e-9)),
            Check(f"d={d}: judgment with precondition I/d holds for each basis state", "passed", "reference", lambda c=clause2: _all([_expect_verdict(v) for v in c()])),
            Check(f"d={d}: judgment with entangled precondition under separability holds", "passed", "reference", lambda c=clause3: _all([_expect_verdict(v) for v in c()])),
            Check(f"d={d}: control program is not uniform", "some diagonal entry differs from 1/d", "derived", lambda c=clause1: _at_least(c(name="identity"), 1e-3)),
            Check(
                f"d={d}: control program fails the I/d judgment",
                "falsified for every basis state",
                "derived",
                lambda c=clause2: _all([_expect_verdict(v, "falsified") for v in c(name="identity")]),
            ),
            Check(
                f"d={d}: control program fails the entangled judgment",
                "falsified for every basis state",
                "derived",
                lambda c=clause3: _all([_expect_verdict(v, "falsified") for v in c(name="identity")]),
            ),
        ]
    return Build(srcs, preds, checks)


def qbf_unitary(seed: int = 5) -> np.ndarray:
    """A fixed Haar-random coin with ``0 < |<0|U|0>| < 1``."""
    return la.haar_unitary(2, np.random.default_rng(seed))


@scenario("qbf-uniformity", "Simplified quantum Bernoulli factory outputs I/2")
def _qbf(opts: Options) -> Build:
    u = qbf_unitary()
    srcs = {"QBF": pg.qbf(u), "QBF_H": pg.qbf(H), "QBF_noTrace": pg.qbf(u, trace_out=False)}
    qbf, qbf_h, qbf_nt = (pg.load(srcs[k]) for k in ("QBF", "QBF_H", "QBF_noTrace"))
    quad = _regs(("x<1>", 2), ("y<1>", 2), ("x<2>", 2), ("y<2>", 2))
    psis = {"0": la.ket(0, 2), "1": la.ket(1, 2), "+": np.array([1, 1]) / np.sqrt(2)}
    for k in range(5):
        psis[f"haar{k}"] = la.haar_state(2, np.random.default_rng([opts.seed, 77, k]))
    preds = {"pre": RegOp(np.eye(16) / 2, quad)}
    for name, psi in psis.items():
        preds[f"post_{name}"] = RegOp(np.kron(la.proj(psi), np.eye(2)), _regs(("x<1>", 2), ("x<2>", 2)))
    tol = opts.tolerance(1e-6)

    def uniform_output(prog):
        worst = 0.0
        for k in range(20):
            out, _ = run(prog, la.random_density(4, opts.rng(6, k)))
            worst = max(worst, la.max_abs(out - np.eye(2) / 2))
        return worst

    def bell():
        out, _ = run(qbf_nt, la.random_density(4, opts.rng(7)))
        bell_state = (np.kron(la.ket(0, 2), la.ket(1, 2)) + np.kron(la.ket(1, 2), la.ket(0, 2))) / np.sqrt(2)
        return _at_least(la.fidelity(out, la.proj(bell_state)), 1 - tol)

    def hadamard_lossless():
        rep = is_lossless(qbf_h)
        return Outcome("pass" if not rep.lossless else "fail", rep.trace_defect, {"lossless": rep.lossless})

    def judgments():
        outs = []
        for name in psis:
            v = check_judgment(Judgment(qbf, qbf, preds["pre"], preds[f"post_{name}"]), Sampler(count=opts.count(40), seed=opts.seed))
            outs.append(_expect_verdict(v))
        return _all(outs, states=list(psis))

    return Build(
        srcs,
        preds,
        [
            Check("random coin: output is I/2 on 20 inputs", "max-norm error <= 1e-6", "reference", lambda: _at_most(uniform_output(qbf), tol, coin_overlap=abs(u[0, 0]))),
            Check("Hadamard coin: output is I/2 on 20 inputs", "max-norm error <= 1e-6", "reference", lambda: _at_most(uniform_output(qbf_h), tol)),
            Check(
                "Hadamard coin: loop is not lossless",
                "the Bell component (|00>+|11>)/sqrt2 is invariant under H(x)H, so half the weight never exits",
                "derived",
                hadamard_lossless,
            ),
            Check("without the final trace-out the output is a Bell state", "fidelity >= 1 - 1e-6", "reference", bell),
            Check("uniformity judgment for eight target states", "passed", "reference", judgments),
        ],
    )


def _teleport_regs():
    return _regs(("p<1>", 2), ("p<2>", 2)), _regs(("r<1>", 2), ("p<2>", 2))


@scenario("teleport-correct", "Teleportation is the identity on the teleported qubit")
def _teleport(opts: Options) -> Build:
    srcs = {"QTEL": pg.teleport(), "SKIP": pg.identity_program(2, "p")}
    tel, skip = pg.load(srcs["QTEL"]), pg.load(srcs["SKIP"])
    pre_regs, post_regs = _teleport_regs()
    basis = la.haar_unitary(2, opts.rng(11))
    preds = {
        "eqB_computational_pre": RegOp(la.basis_identity(np.eye(2)), pre_regs),
        "eqB_computational_post": RegOp(la.basis_identity(np.eye(2)), post_regs),
        "eqB_random_pre": RegOp(la.basis_identity(basis), pre_regs),
        "eqB_random_post": RegOp(la.basis_identity(basis), post_regs),
        "sym_pre": RegOp(la.sym_projector(2), pre_regs),
        "sym_post": RegOp(la.sym_projector(2), post_regs),
    }
    tol = opts.tolerance(1e-9)

    def semantics():
        worst = 0.0
        for k in range(20):
            rho = la.random_density(8, opts.rng(12, k))
            out, regs = run(tel, rho)
            worst = max(worst, la.max_abs(reduce_to(out, regs, lookup(regs, ["r"])) - reduce_to(rho, tel.input_regs, lookup(tel.input_regs, ["p"]))))
        return _at_most(worst, tol)

    def judgment(name):
        v = check_judgment(Judgment(tel, skip, preds[f"{name}_pre"], preds[f"{name}_post"]), Sampler(count=opts.count(50), seed=opts.seed))
        return _expect_verdict(v)

    return Build(
        srcs,
        preds,
        [
            Check("output on r equals the input on p (20 inputs)", "max-norm error <= 1e-9", "reference", semantics),
            Check("basis equality (computational basis) is preserved", "passed", "reference", lambda: judgment("eqB_computational")),
            Check("basis equality (random basis) is preserved", "passed", "reference", lambda: judgment("eqB_random")),
            Check("symmetric equality is preserved", "passed", "reference", lambda: judgment("sym")),
        ],
    )


def noise_quality(kind: str, p: float) -> float:
    """Effective phase-flip parameter of the precondition for each noise model."""
    return p * p + (1 - p) ** 2 if kind == "bitphaseflip" else p


def fidelity_slack(kind: str, p: float, psi: np.ndarray) -> float:
    """``<psi|rho|psi> - (q + (1-q)|<psi|Z|psi>|^2)`` for the noisy teleport output ``rho``."""
    prog = pg.load(pg.teleport(kind, p))
    zero = la.proj(la.ket(0, 2))
    out, regs = run(prog, la.tensor(la.proj(psi), zero, zero))
    rho = reduce_to(out, regs, lookup(regs, ["r"]))
    q = noise_quality(kind, p)
    fid = float(np.real(psi.conj() @ rho @ psi))
    return fid - (q + (1 - q) * abs(psi.conj() @ Z @ psi) ** 2)


def _noise_scenario(kind: str):
    def build(opts: Options) -> Build:
        p = 0.9
        srcs = {"QTEL_noisy": pg.teleport(kind, p), "QTEL": pg.teleport()}
        noisy, clean = pg.load(srcs["QTEL_noisy"]), pg.load(srcs["QTEL"])
        q = noise_quality(kind, p)
        psis = {"0": la.ket(0, 2), "+": np.array([1, 1]) / np.sqrt(2), "haar": la.haar_state(2, opts.rng(21))}
        pre_regs = _regs(("p<1>", 2), ("p<2>", 2))
        post_regs = _regs(("r<1>", 2), ("r<2>", 2))
        preds = {}
        for name, psi in psis.items():
            a = la.proj(psi)
            preds[f"pre_{name}"] = RegOp(np.kron(q * a + (1 - q) * Z @ a @ Z, a), pre_regs)
            preds[f"post_{name}"] = RegOp(np.kron(a, a), post_regs)
        tol = 1e-7

        def bound(pv):
            worst = min(fidelity_slack(kind, pv, la.haar_state(2, opts.rng(22, k))) for k in range(20))
            return _at_least(worst, -tol, p=pv)

        def judgments():
            outs = []
            for name in psis:
                v = check_judgment(Judgment(noisy, clean, preds[f"pre_{name}"], preds[f"post_{name}"]), Sampler(count=opts.count(30), seed=opts.seed))
                outs.append(_expect_verdict(v))
            return _all(outs)

        return Build(
            srcs,
            preds,
            [
                Check("fidelity bound at p = 0.9 (20 states)", "<psi|rho|psi> >= q + (1-q)|<psi|Z|psi>|^2 with slack >= -1e-7", "reference", lambda: bound(0.9)),
                Check("fidelity bound at p = 0.5 (20 states)", "<psi|rho|psi> >= q + (1-q)|<psi|Z|psi>|^2 with slack >= -1e-7", "reference", lambda: bound(0.5)),
                Check("reliability judgment against noiseless teleportation", "passed for |0>, |+> and a random state", "reference", judgments),
            ],
            {"p": p, "phase_flip_parameter": q},
        )

    return build


for _kind, _title in (("bitflip", "bit flip"), ("phaseflip", "phase flip"), ("bitphaseflip", "bit-phase flip")):
    scenario(f"teleport-noise-{_kind}", f"Teleportation with {_title} noise (p = 0.9)")(_noise_scenario(_kind))


def _qotp_channel_distance(prog, n: int, target: str, rng: np.random.Generator) -> float:
    inputs = prog.input_regs
    data = inputs[:n]
    keys_dim = int(np.prod([r.dim for r in inputs[n:]]))
    d = 2**n
    if target == "identity":
        want = sum(np.kron(la.basis_op(i, j, d), la.basis_op(i, j, d)) for i in range(d) for j in range(d))
    else:
        want = np.kron(np.eye(d), np.eye(d) / d)
    worst = 0.0
    for fill in (la.proj(la.ket(0, keys_dim)), la.random_density(keys_dim, rng)):
        worst = max(worst, la.max_abs(_restricted_choi(lambda rho: run(prog, rho)[0], data, fill) - want))
    return worst


@scenario("qotp-correct", "One-time pad: decryption recovers the plaintext")
def _qotp_correct(opts: Options) -> Build:
    srcs = {"QOTP": pg.qotp(1, decrypt=True), "SKIP": pg.identity_program(2, "p")}
    prog, skip = pg.load(srcs["QOTP"]), pg.load(srcs["SKIP"])
    pair = _regs(("p<1>", 2), ("p<2>", 2))
    preds = {"sym": RegOp(la.sym_projector(2), pair)}

    def channel():
        return _at_most(_qotp_channel_distance(prog, 1, "identity", opts.rng(31)), opts.tolerance(1e-8))

    def judgment():
        v = check_judgment(Judgment(prog, skip, preds["sym"], preds["sym"]), Sampler(count=opts.count(50), seed=opts.seed))
        return _expect_verdict(v)

    def lossless():
        rep = is_lossless(prog)
        return Outcome("pass" if rep.lossless else "fail", rep.trace_defect)

    return Build(
        srcs,
        preds,
        [
            Check("channel on p is the identity", "Choi distance <= 1e-8", "reference", channel),
            Check("program is lossless", "trace preserved", "derived", lossless),
            Check("symmetric equality is preserved against skip", "passed", "reference", judgment),
        ],
    )


@scenario("qotp-secure", "One-time pad: the ciphertext is maximally mixed")
def _qotp_secure(opts: Options) -> Build:
    srcs = {"QOTP_enc": pg.qotp(1, decrypt=False)}
    prog = pg.load(srcs["QOTP_enc"])
    pair = _regs(("p<1>", 2), ("p<2>", 2))
    psis = {"0": la.ket(0, 2), "+": np.array([1, 1]) / np.sqrt(2), "haar": la.haar_state(2, opts.rng(41))}
    preds = {"pre": RegOp(np.eye(4) / 2, pair), "expected_output": RegOp(np.eye(2) / 2, _regs(("p", 2)))}
    for name, psi in psis.items():
        preds[f"post_{name}"] = RegOp(np.kron(la.proj(psi), np.eye(2)), pair)

    def channel():
        return _at_most(_qotp_channel_distance(prog, 1, "uniform", opts.rng(42)), opts.tolerance(1e-8))

    def judgments():
        outs = []
        for name in psis:
            v = check_judgment(Judgment(prog, prog, preds["pre"], preds[f"post_{name}"]), Sampler(count=opts.count(30), seed=opts.seed))
            outs.append(_expect_verdict(v))
        return _all(outs)

    return Build(
        srcs,
        preds,
        [
            Check("output of p is I/2 for every input", "Choi distance to the replacement channel <= 1e-8", "reference", channel),
            Check("uniformity judgment for three target states", "passed", "reference", judgments),
        ],
        {"expected_output": "I/2 on register p"},
    )


@scenario("qotp-n", "One-time pad on two qubits")
def _qotp_n(opts: Options) -> Build:
    srcs = {"QOTP2": pg.qotp(2, decrypt=True), "QOTP2_enc": pg.qotp(2, decrypt=False), "SKIP2": "var p1 : 2, p2 : 2;\nskip"}
    correct, enc, skip = (pg.load(srcs[k]) for k in ("QOTP2", "QOTP2_enc", "SKIP2"))
    left, right = _regs(("p1<1>", 2), ("p2<1>", 2)), _regs(("p1<2>", 2), ("p2<2>", 2))
    preds = {"sym": RegOp(la.sym_projector(4), left + right), "expected_output": RegOp(np.eye(4) / 4, _regs(("p1", 2), ("p2", 2)))}

    def judgment():
        v = check_judgment(Judgment(correct, skip, preds["sym"], preds["sym"]), Sampler(count=opts.count(20), seed=opts.seed))
        return _expect_verdict(v)

    return Build(
        srcs,
        preds,
        [
            Check("decryption: channel on p1 p2 is the identity", "Choi distance <= 1e-8", "reference", lambda: _at_most(_qotp_channel_distance(correct, 2, "identity", opts.rng(51)), opts.tolerance(1e-8))),
            Check("encryption: output of p1 p2 is I/4 for every input", "Choi distance <= 1e-8", "reference", lambda: _at_most(_qotp_channel_distance(enc, 2, "uniform", opts.rng(52)), opts.tolerance(1e-8))),
            Check("symmetric equality on p1 p2 is preserved against skip", "passed", "reference", judgment),
        ],
        {"note": "the two-qubit security judgment acts on a 4096-dimensional joint input and is checked at channel level instead"},
    )


def walk_predicates(n: int = 4) -> dict[str, RegOp]:
    size = n + 1
    quad = _regs(("c<1>", 2), ("p<1>", size), ("c<2>", 2), ("p<2>", size))
    u = np.kron(np.eye(2 * size), pg.walk_phase(n))
    pre = u @ la.sym_projector(2 * size) @ la.dag(u)
    ends = np.zeros((size, size))
    ends[0, 0] = ends[n, n] = 1
    both = np.kron(ends, ends)
    post = 0.5 * (both + both @ la.swap_operator(size) @ both)
    return {"pre": RegOp(pre, quad), "post": RegOp(post, _regs(("p<1>", size), ("p<2>", size)))}


@scenario("qwalk-equiv", "Hadamard and balanced-coin walks terminate at the same position (n = 4)")
def _qwalk(opts: Options) -> Build:
    n = 4
    srcs = {"QW_H": pg.walk(H, n), "QW_Y": pg.walk(pg.BALANCED_COIN, n)}
    qh, qy = pg.load(srcs["QW_H"]), pg.load(srcs["QW_Y"])
    preds = walk_predicates(n)
    u = pg.walk_phase(n)

    def distributions():
        worst = 0.0
        for k in range(20):
            rho = la.random_density(2 * (n + 1), opts.rng(61, k))
            o1, _ = run(qh, rho)
            o2, _ = run(qy, u @ rho @ la.dag(u))
            worst = max(worst, 0.5 * float(np.sum(np.abs(np.real(np.diag(o1)) - np.real(np.diag(o2))))))
        return _at_most(worst, opts.tolerance(1e-6))

    def projective():
        v = check_projective_judgment(qh, qy, preds["pre"], preds["post"], Sampler(count=opts.count(30), seed=opts.seed))
        return _expect_verdict(v, "passed", -1e-6)

    def lossless():
        reps = [is_lossless(qh), is_lossless(qy)]
        return Outcome("pass" if all(r.lossless for r in reps) else "fail", max(r.trace_defect for r in reps))

    return Build(
        srcs,
        preds,
        [
            Check("position distributions agree (20 inputs)", "total variation <= 1e-6", "reference", distributions),
            Check("projective equivalence judgment", "passed", "reference", projective),
            Check("both walks terminate almost surely", "lossless", "derived", lossless),
        ],
        {"phase": "inputs of the second walk are rotated by diag((-i)^(i+d+3))", "n": n},
    )


COMPARABLE_LOOPS = (
    """var q : 2;
let M = meas {0: [[1,0],[0,0]], 1: [[0,0],[0,1]]};
let R = [[0.8, -0.6],[0.6, 0.8]];
while M[q] = 1 do q := R[q] od""",
    """var q : 2, r : 2;
let M = meas {0: [[1,0],[0,0]], 1: [[0,0],[0,1]]};
let R = [[0.8, -0.6],[0.6, 0.8]];
r := H[r]; while M[q] = 1 do q := R[q]; r := X[r] od""",
)


@scenario("comparability-demo", "Constraints under which two programs branch identically")
def _comparability(opts: Options) -> Build:
    srcs = {"Q1": pg.working_if_left(), "Q2": pg.working_if_right(), "W1": COMPARABLE_LOOPS[0], "W2": COMPARABLE_LOOPS[1], "E1": pg.identity_program(2), "E2": pg.identity_program(2)}
    q1, q2, w1, w2, e1, e2 = (pg.load(srcs[k]) for k in ("Q1", "Q2", "W1", "W2", "E1", "E2"))
    plus = la.proj(np.array([1, 1]) / np.sqrt(2))
    zero = la.proj(la.ket(0, 2))

    def working():
        c = collect_constraints(q1, q2)
        res = float(np.max(c.residuals(plus, zero)))
        gap = profile_gap(q1, q2, plus, zero)
        return Outcome("pass" if check_comparability(c, plus, zero) and gap <= 1e-9 else "fail", res, {"constraints": len(c), "profile_gap": gap})

    def working_control():
        c = collect_constraints(q1, q2)
        gap = profile_gap(q1, q2, zero, zero)
        ok = not check_comparability(c, zero, zero) and gap > 1e-3
        return Outcome("pass" if ok else "fail", float(np.max(c.residuals(zero, zero))), {"profile_gap": gap})

    def same_program():
        c = collect_constraints(q1, q1)
        rho = la.random_density(2, opts.rng(71))
        return _at_most(float(np.max(c.residuals(rho, rho))), 1e-8)

    def empty():
        c = collect_constraints(e1, e2)
        ok = len(c) == 1 and la.max_abs(c.pairs[0][0] - c.pairs[0][1]) <= 1e-12
        return Outcome("pass" if ok else "fail", float(len(c)))

    def loops(bound):
        c = collect_constraints(w1, w2, bound=bound)
        rng = opts.rng(72)
        worst, used = 0.0, 0
        for _ in range(50):
            pair = sample_comparable(c, rng)
            if pair is None:
                continue
            used += 1
            worst = max(worst, profile_gap(w1, w2, *pair, max_events=8))
        status = "pass" if used >= 40 and worst <= 1e-7 else "fail" if worst > 1e-7 else "inconclusive"
        return Outcome(status, worst, {"constraints": len(c), "pairs_used": used})

    return Build(
        srcs,
        {},
        [
            Check("working-example branch statements agree on (|+>, |0>)", "all constraints hold and branch profiles coincide", "reference", working),
            Check("working-example branch statements differ on (|0>, |0>)", "some constraint fails and branch profiles differ", "derived", working_control),
            Check("a program compared with itself on equal inputs", "all constraints hold", "trivial", same_program),
            Check("programs without branching", "only the seed pair (I, I)", "trivial", empty),
            Check("loop pair, algorithm bound: 50 satisfying inputs", "branch profiles agree to depth 8 within 1e-7", "derived", lambda: loops("algorithm")),
            Check("loop pair, tight bound: 50 satisfying inputs", "branch profiles agree to depth 8 within 1e-7", "derived", lambda: loops("tight")),
        ],
    )


GAP_OBJECTIVE = np.array([[2, 0, 0, 1], [0, 1, 0, 0], [0, 0, 1, 0], [1, 0, 0, 2]]) / 3


@scenario("coupling-gap", "Entangled couplings beat positive-partial-transpose ones")
def _coupling_gap(opts: Options) -> Build:
    half = np.eye(2) / 2

    def full():
        sol = max_coupling_value(CouplingProblem(half, half, GAP_OBJECTIVE))
        return Outcome("pass" if sol.ok and abs(sol.value - 1) <= 1e-5 else "fail", sol.value, {"solver": sol.status})

    def ppt():
        sol = max_coupling_value(CouplingProblem(half, half, GAP_OBJECTIVE, ppt=True))
        return Outcome("pass" if sol.ok and abs(sol.value - 2 / 3) <= 1e-4 else "fail", sol.value, {"solver": sol.status})

    return Build(
        {},
        {"objective": RegOp(GAP_OBJECTIVE, PAIR)},
        [
            Check("maximum over all couplings of (I/2, I/2)", "1.000 within 1e-5", "reference", full),
            Check("maximum over PPT couplings", "0.6667 within 1e-4", "reference", ppt),
        ],
    )


@scenario("projective-separation", "Projective validity is strictly weaker than general validity")
def _projective_separation(opts: Options) -> Build:
    srcs = {"FLIP": pg.flip_program(), "SKIP": pg.identity_program(2)}
    flip, skip = pg.load(srcs["FLIP"]), pg.load(srcs["SKIP"])
    phi = RegOp(la.proj(la.max_entangled(2)), PAIR)

    def projective():
        return _expect_verdict(check_projective_judgment(flip, skip, phi, phi, Sampler(count=opts.count(30), seed=opts.seed)), "passed", -1e-6)

    def general():
        v = check_judgment(Judgment(flip, skip, phi, phi), Sampler(count=opts.count(50), seed=opts.seed))
        out = _expect_verdict(v, "falsified")
        target = la.proj(la.ket(0, 4))
        at_00 = False
        if v.counterexample is not None:
            cex = la.proj(v.counterexample) if v.counterexample.ndim == 1 else v.counterexample
            at_00 = la.max_abs(cex - target) <= 1e-12
        if out.status == "pass" and not at_00:
            out.status = "fail"
        out.detail["counterexample_is_00"] = bool(at_00)
        return out

    return Build(
        srcs,
        {"phi": phi},
        [
            Check("projective judgment with maximally entangled pre/post", "passed", "reference", projective),
            Check("the same judgment under general validity", "falsified at |00><00|", "reference", general),
        ],
    )


def _random_loop_pair(family: str, rng: np.random.Generator) -> tuple[str, str]:
    from ..lang.pretty import format_matrix

    def src(meas, kraus):
        m = ", ".join(f"{k}: {format_matrix(op)}" for k, op in enumerate(meas))
        e = ", ".join(format_matrix(k) for k in kraus)
        return f"var q : 2;\nlet M = meas {{{m}}};\nlet E = kraus {{{e}}};\nwhile M[q] = 1 do q := E[q] od"

    if family == "classical":
        comp = [la.proj(la.ket(0, 2)), la.proj(la.ket(1, 2))]
        t = rng.dirichlet(np.ones(2), size=2).T  # column-stochastic
        kraus = [np.sqrt(t[i, j]) * la.basis_op(i, j, 2) for i in range(2) for j in range(2)]
        return src(comp, kraus), src(comp, kraus)
    meas = la.random_measurement(2, rng, outcomes=2)
    kraus = la.random_channel(2, 2, rng)
    if family == "conjugate":
        v = la.haar_unitary(2, rng)
        return src(meas, kraus), src([v @ m @ la.dag(v) for m in meas], [v @ k @ la.dag(v) for k in kraus])
    return src(meas, kraus), src(la.random_measurement(2, rng, outcomes=2), la.random_channel(2, 2, rng))


def loop_series_trial(family: str, rng: np.random.Generator, short: int = 8, long: int = 21, tries: int = 3) -> Optional[float]:
    """Sample inputs whose exit distributions agree for the first ``short`` iterations; return the worst gap over ``long``.

    ``None`` when no such inputs are found.
    """
    s1, s2 = _random_loop_pair(family, rng)
    p1, p2 = pg.load(s1), pg.load(s2)
    f1 = loop_effects(p1.body, p1.input_regs, long)
    f2 = loop_effects(p2.body, p2.input_regs, long)
    c = ConstraintSet(p1.input_regs, p2.input_regs, list(zip(f1[:short], f2[:short])))
    worst = None
    for _ in range(tries):
        pair = sample_comparable(c, rng)
        if pair is None:
            continue
        r1, r2 = pair
        if np.max(c.residuals(r1, r2)) > 1e-9:
            continue
        gap = max(abs(np.real(np.trace(a @ r1) - np.trace(b @ r2))) for a, b in zip(f1, f2))
        worst = gap if worst is None else max(worst, gap)
    return worst


@scenario("loop-series", "Exit distributions that agree for d1^2+d2^2 iterations agree forever")
def _loop_series(opts: Options) -> Build:
    def trials():
        gaps, vacuous = [], 0
        for k in range(20):
            family = ("conjugate", "classical", "independent")[k % 3]
            gap = loop_series_trial(family, opts.rng(81, k))
            if gap is None:
                vacuous += 1
            else:
                gaps.append(gap)
        worst = max(gaps, default=0.0)
        status = "fail" if worst > 1e-8 else "pass" if len(gaps) >= 10 else "inconclusive"
        return Outcome(status, worst, {"non_vacuous": len(gaps), "vacuous": vacuous})

    return Build(
        {},
        {},
        [Check("20 random loop pairs on qubits: agreement for n <= 7 implies n <= 20", "max deviation <= 1e-8", "reference", trials)],
    )


@scenario("equality-liftings", "A symmetric-subspace lifting exists exactly for equal states")
def _equality_liftings(opts: Options) -> Build:
    sym = la.sym_projector(2)

    def run_pairs():
        misclassified = 0
        worst_equal = 0.0
        for k in range(50):
            rho = la.random_density(2, opts.rng(91, k))
            sol = lifting_exists(rho, rho, sym)
            worst_equal = max(worst_equal, abs(sol.residuals.get("lifting_gap", np.inf)))
            misclassified += sol.status != "feasible"
        for k in range(50):
            rng = opts.rng(92, k)
            rho1, rho2 = la.random_density(2, rng), la.random_density(2, rng)
            misclassified += lifting_exists(rho1, rho2, sym).status != "infeasible"
        return Outcome("pass" if misclassified == 0 else "fail", float(misclassified), {"worst_equal_gap": worst_equal})

    return Build({}, {"sym": RegOp(sym, PAIR)}, [Check("50 equal and 50 unequal pairs", "zero misclassifications", "reference", run_pairs)])


# running and exporting ----------------------------------------------------------------------

def list_scenarios() -> list[dict]:
    return [{"id": s.id, "title": s.title} for s in REGISTRY.values()]


def get_scenario(sid: str) -> Scenario:
    try:
        return REGISTRY[sid]
    except KeyError:
        raise UnknownScenario(f"unknown scenario {sid!r}; known: {', '.join(REGISTRY)}") from None


def run_scenario(sid: str, options: Optional[Options] = None) -> Report:
    opts = options or Options()
    sc = get_scenario(sid)
    start = time.perf_counter()
    build = sc.build(opts)
    results = []
    for chk in build.checks:
        try:
            out = chk.run()
        except Exception as exc:  # a crashing check is a failed check, not a crashed run
            out = Outcome("fail", None, {"error": f"{type(exc).__name__}: {exc}"})
        results.append(CheckResult(chk.name, out.status, out.residual, chk.expected, chk.provenance, out.detail))
    return Report(sc.id, sc.title, opts.seed, results, time.perf_counter() - start)


def export_fixture(sid: str, directory: str | Path, options: Optional[Options] = None) -> list[Path]:
    """Write the scenario's programs (``.qw``) and a ``scenario.json`` describing predicates and checks."""
    opts = options or Options()
    sc = get_scenario(sid)
    build = sc.build(opts)
    root = Path(directory) / sc.id
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for name, source in build.programs.items():
        path = root / f"{name}.qw"
        path.write_text(source + "\n")
        written.append(path)
    extra = dict(build.extra)
    outline = extra.pop("outline", None)
    if outline is not None:
        path = root / "outline.json"
        path.write_text(json.dumps(outline, indent=2, sort_keys=True))
        written.append(path)
    meta = {
        "id": sc.id,
        "title": sc.title,
        "seed": opts.seed,
        "programs": {name: f"{name}.qw" for name in build.programs},
        "predicates": {name: predicate_to_json(op) for name, op in build.predicates.items()},
        "checks": [{"name": c.name, "expected": c.expected, "provenance": c.provenance} for c in build.checks],
        "parameters": _clean(extra),
    }
    path = root / "scenario.json"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    written.append(path)
    return written
