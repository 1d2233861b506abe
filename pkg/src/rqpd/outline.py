"""Proof outlines: annotated program pairs checked segment by segment.

Each segment carries the predicates written around one rule application.
Checking recomputes the precondition from the postcondition (forward for
projective outlines), compares within ``tol``, chains neighbouring segments
and discharges every obligation the rules leave behind.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import linalg as la
from .judgment import (
    AffineSlice,
    Judgment,
    MeasEq,
    Sampler,
    _constraint_ops,
    check_couple_entailment,
    check_meas_judgment,
    check_projective_meas_judgment,
    sample_inputs,
)
from .lang.ast import Program, seq
from .rules import (
    PROJECTIVE_RULES,
    Context,
    Derived,
    Obligation,
    RuleError,
    RuleInstance,
    derive,
    derive_forward,
    entailment_obligation,
    loewner_residual,
    predicate_violation,
)
from .semantics import is_lossless
from .spaces import RegOp, Register, Regs, names, total_dim

POLICIES = ("strict", "assume-lossless")
OUTLINE_TOL = 1e-8


@dataclass
class Segment:
    rule: RuleInstance
    pre: RegOp
    post: RegOp
    gamma: tuple = ()


@dataclass
class ProofOutline:
    p1: Program
    p2: Program
    segments: list[Segment]
    projective: bool = False
    name: str = ""


@dataclass
class StepReport:
    index: int
    rule: str
    status: str  # ok | mismatch | error
    residual: float = 0.0
    message: str = ""
    obligations: list[Obligation] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "rule": self.rule,
            "status": self.status,
            "residual": _num(self.residual),
            "message": self.message,
            "obligations": [obligation_dict(o) for o in self.obligations],
        }


@dataclass
class OutlineReport:
    status: str  # verified | refuted | inconclusive
    policy: str
    steps: list[StepReport]
    conclusion: Optional[Judgment] = None
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "verified"

    @property
    def obligations(self) -> list[Obligation]:
        return [o for s in self.steps for o in s.obligations]

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "policy": self.policy,
            "steps": [s.to_dict() for s in self.steps],
            "notes": self.notes,
            "empirical": any(o.empirical for o in self.obligations),
        }


def _num(x: float):
    return None if x is None or not np.isfinite(x) else float(x)


def obligation_dict(o: Obligation) -> dict:
    return {
        "kind": o.kind,
        "description": o.description,
        "discharge": o.discharge,
        "status": o.status,
        "residual": _num(o.residual),
        "empirical": o.empirical,
    }


# obligations --------------------------------------------------------------------------

def discharge(ob: Obligation, policy: str = "strict", sampler: Optional[Sampler] = None, tol: float = OUTLINE_TOL) -> Obligation:
    """Settle one obligation in place; status becomes passed, failed, assumed or inconclusive."""
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    if ob.status != "pending":
        return ob
    sampler = sampler or Sampler(count=50)
    if ob.kind == "loewner":
        ob.residual = loewner_residual(ob.payload["lower"], ob.payload["upper"])
        ob.status = "passed" if ob.residual >= -tol else "failed"
    elif ob.kind == "losslessness":
        if policy == "assume-lossless":
            ob.discharge, ob.status = "unchecked-assumption", "assumed"
            return ob
        joint = tuple(ob.payload["regs"])
        present = set(names(joint))
        extra = tuple(r for r in ob.payload["decl"] if r.name not in present)
        report = is_lossless(Program(joint + extra, ob.payload["stmt"]), joint, tol=tol)
        ob.residual = report.trace_defect
        ob.status = "passed" if report.lossless else "failed"
    elif ob.kind == "separability":
        clash = set(ob.payload["frame"]) & set(ob.payload["vars"])
        ob.residual = float(len(clash))
        ob.status = "failed" if clash else "passed"
    elif ob.kind == "couple-entailment":
        v = check_couple_entailment(ob.payload["gamma"], ob.payload["delta"], ob.payload["p1"], ob.payload["p2"], sampler)
        ob.residual = v.worst_margin
        ob.status = {"passed": "passed", "falsified": "failed"}.get(v.status, "inconclusive")
    elif ob.kind in ("measurement-judgment", "projective-lifting"):
        _discharge_meas(ob, sampler)
    else:
        raise ValueError(f"unknown obligation kind {ob.kind!r}")
    return ob


def _meas_witnesses(ob: Obligation, sampler: Sampler):
    """States on which to test a measurement judgment."""
    p = ob.payload
    regs1, regs2 = tuple(p["regs1"]), tuple(p["regs2"])
    cond: MeasEq = p["cond"]
    if ob.kind == "measurement-judgment":
        yield from ((label, s) for label, s, _ in sample_inputs((cond,), regs1, regs2, sampler))
        return
    # projective: states supported inside the precondition, sampled on its range
    joint = regs1 + regs2
    a = p["pre"].on(joint)
    w, v = la.eigh(a)
    basis = v[:, w > 0.5]
    r = basis.shape[1]
    if r == 0:
        return
    ops = [la.dag(basis) @ c @ basis for c in _constraint_ops((cond,), regs1, regs2)]
    slice_ = AffineSlice(ops, r) if ops else None
    if sampler.battery:
        for i in range(r):
            sigma = la.proj(la.ket(i, r))
            if slice_ is None or slice_.residual(sigma) <= 1e-9:
                yield f"range[{i}]", basis @ sigma @ la.dag(basis)
    for k in range(sampler.count):
        rng = np.random.default_rng([sampler.seed, k])
        sigma = la.proj(la.haar_state(r, rng))
        if slice_ is not None:
            sigma = slice_.sample(sigma)
            if sigma is None:
                continue
        yield f"random[{k}]", basis @ sigma @ la.dag(basis)


def _discharge_meas(ob: Obligation, sampler: Sampler) -> None:
    p = ob.payload
    check = check_meas_judgment if ob.kind == "measurement-judgment" else check_projective_meas_judgment
    used, failures, worst = 0, 0, np.inf
    for label, state in _meas_witnesses(ob, sampler):
        res = check(p["cond"], p["pre"], p["posts"], state, p["regs1"], p["regs2"])
        if res.status == "precondition-violated":
            continue
        if res.status == "numerical-failure":
            failures += 1
            continue
        used += 1
        if ob.kind == "measurement-judgment":
            worst = min(worst, res.rhs - res.lhs)
        if res.status == "fails":
            ob.status, ob.residual = "failed", worst if np.isfinite(worst) else -1.0
            ob.payload["counterexample"] = (label, state)
            return
    ob.residual = 0.0 if not np.isfinite(worst) else worst
    ob.status = "passed" if used and not failures else "inconclusive"


# outlines -----------------------------------------------------------------------------

def _compare(claimed: RegOp, derived: RegOp, layout: Regs) -> float:
    return la.max_abs(claimed.on(layout) - derived.on(layout))


def check_outline(
    outline: ProofOutline,
    policy: str = "strict",
    sampler: Optional[Sampler] = None,
    tol: float = OUTLINE_TOL,
) -> OutlineReport:
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    notes: list[str] = []
    steps: list[StepReport] = []
    segs = outline.segments
    if not segs:
        return OutlineReport("refuted", policy, [], notes=["outline has no segments"])
    left = seq(*[s.rule.left for s in segs])
    right = seq(*[s.rule.right for s in segs])
    if left != seq(outline.p1.body) or right != seq(outline.p2.body):
        return OutlineReport("refuted", policy, [], notes=["segments do not cover the two programs"])

    ctx = Context.of_programs(outline.p1, outline.p2)
    ctxs = [ctx]
    for s in segs[:-1]:
        ctxs.append(ctxs[-1].after(s.rule.left, s.rule.right))

    for i, (seg, c) in enumerate(zip(segs, ctxs)):
        after = c.after(seg.rule.left, seg.rule.right).joint
        try:
            if outline.projective:
                if seg.rule.rule not in PROJECTIVE_RULES:
                    raise RuleError(f"({seg.rule.rule}) is not part of the projective system")
                d: Derived = derive_forward(seg.rule, seg.pre, c)
                residual = _compare(seg.post, d.post, after)
            else:
                d = derive(seg.rule, seg.post, c)
                residual = _compare(seg.pre, d.pre, c.joint)
        except (RuleError, KeyError, ValueError) as exc:
            steps.append(StepReport(i, seg.rule.rule, "error", float("nan"), str(exc)))
            continue
        report = StepReport(i, seg.rule.rule, "ok" if residual <= tol else "mismatch", residual, obligations=list(d.obligations))
        if report.status == "mismatch":
            report.message = f"claimed {'post' if outline.projective else 'pre'}condition differs from the derived one by {residual:.3g}"
        extra = [g for g in d.gamma if g not in seg.gamma]
        if extra:
            report.status = "mismatch"
            report.message += f" derived side conditions {[str(g) for g in extra]} are missing from the annotation"
        elif set(seg.gamma) != set(d.gamma):
            report.message += " side conditions weakened"
        for op, what in ((seg.pre, "pre"), (seg.post, "post")):
            if predicate_violation(op) > tol:
                report.status = "mismatch"
                report.message += f" {what}condition is not a quantum predicate"
        if i + 1 < len(segs):
            gap = _compare(seg.post, segs[i + 1].pre, after)
            if gap > tol:
                report.status = "mismatch"
                report.message += f" postcondition does not match the next precondition ({gap:.3g})"
            if segs[i + 1].gamma:
                report.obligations.append(entailment_obligation(seg.gamma, segs[i + 1].gamma, seg.rule, c))
        steps.append(report)

    for s in steps:
        for ob in s.obligations:
            discharge(ob, policy, sampler, tol)

    statuses = [o.status for o in (o for s in steps for o in s.obligations)]
    if any(s.status != "ok" for s in steps) or "failed" in statuses:
        status = "refuted"
    elif "inconclusive" in statuses or "pending" in statuses:
        status = "inconclusive"
    else:
        status = "verified"
    if "assumed" in statuses:
        notes.append("losslessness assumed without checking")
    conclusion = None
    if status == "verified":
        conclusion = Judgment(outline.p1, outline.p2, segs[0].pre, segs[-1].post, segs[0].gamma)
    return OutlineReport(status, policy, steps, conclusion, notes)
