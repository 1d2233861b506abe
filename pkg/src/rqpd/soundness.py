"""Randomized soundness harness for the proof rules.

For every rule we draw random qubit programs of the shape the rule expects,
build an instance whose premises are themselves basic rules, derive the
conclusion, discharge the side obligations and then sample-check the derived
judgment semantically.  Instances whose obligations fail are not derivations
and are redrawn; a derived judgment that the semantic check falsifies is a
soundness bug.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from . import linalg as la
from .judgment import Judgment, MeasEq, Sampler, check_judgment, check_projective_judgment
from .lang import parse
from .lang.ast import Program, Seq, Skip, Stmt, Unitary
from .lang.pretty import format_matrix
from .outline import discharge
from .rules import Context, RuleError, RuleInstance, derive, derive_forward, qpd_derive
from .semantics import run, run_dual
from .spaces import Register, RegOp

Q1, Q2 = Register("q<1>", 2), Register("q<2>", 2)
E1, E2 = Register("e<1>", 2), Register("e<2>", 2)
JOINT = (Q1, Q2)


@dataclass
class Trial:
    """One random instance: programs, rule tree and the predicate it is applied to."""

    rule: str
    p1: Program
    p2: Program
    inst: RuleInstance
    given: RegOp  # postcondition (backward rules) or precondition (projective rules)
    forward: bool = False


@dataclass
class RuleOutcome:
    rule: str
    instances: int = 0
    rejected: int = 0
    falsified: int = 0
    inconclusive: int = 0
    worst_margin: float = float("inf")
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.falsified == 0 and self.inconclusive == 0 and self.instances > 0


# program text ---------------------------------------------------------------------

class Source:
    """Accumulates ``let`` declarations and statements for one side."""

    def __init__(self, rng: np.random.Generator, regs: str = "q : 2"):
        self.rng = rng
        self.regs = regs
        self.decls: list[str] = []
        self.count = 0

    def _name(self, prefix: str) -> str:
        self.count += 1
        return f"{prefix}{self.count}"

    def unitary(self, reg: str = "q") -> str:
        name = self._name("U")
        self.decls.append(f"let {name} = {format_matrix(la.haar_unitary(2, self.rng))};")
        return f"{reg} := {name}[{reg}]"

    def channel(self) -> str:
        name = self._name("E")
        kraus = la.random_channel(2, 2, self.rng, 2)
        self.decls.append(f"let {name} = kraus {{{', '.join(format_matrix(k) for k in kraus)}}};")
        return f"q := {name}[q]"

    def measurement(self, projective: bool = False) -> str:
        name = self._name("M")
        ops = la.random_measurement(2, self.rng, 2, projective=projective)
        self.decls.append(f"let {name} = meas {{0: {format_matrix(ops[0])}, 1: {format_matrix(ops[1])}}};")
        return name

    def if_stmt(self) -> str:
        m = self.measurement()
        return f"if {m}[q] = 0 -> {self.unitary()} [] 1 -> {self.unitary()} fi"

    def loop(self, body: Optional[str] = None) -> str:
        m = self.measurement(projective=True)
        body = body or self.unitary()
        return f"while {m}[q] = 1 do {body} od"

    def program(self, *stmts: str) -> Program:
        body = ";\n".join(stmts) if stmts else "skip"
        return parse(f"var {self.regs};\n" + "\n".join(self.decls) + "\n" + body)


def _predicate(rng: np.random.Generator, regs=JOINT) -> RegOp:
    d = int(np.prod([r.dim for r in regs]))
    return RegOp(la.random_predicate(d, rng), regs)


def _projector(rng: np.random.Generator, regs=JOINT, rank: Optional[int] = None) -> RegOp:
    d = int(np.prod([r.dim for r in regs]))
    rank = rank or int(rng.integers(1, d))
    u = la.haar_unitary(d, rng)[:, :rank]
    return RegOp(u @ la.dag(u), regs)


def _stmts(p: Program) -> tuple:
    return p.body.stmts if isinstance(p.body, Seq) else (p.body,)


# backward rule generators ------------------------------------------------------------

def _one_sided(rule: str, side: int, make: Callable[[Source], str], rng) -> Trial:
    s1, s2 = Source(rng), Source(rng)
    if side == 1:
        p1, p2 = s1.program(make(s1)), s2.program()
    elif side == 2:
        p1, p2 = s1.program(), s2.program(make(s2))
    else:
        p1, p2 = s1.program(make(s1)), s2.program(make(s2))
    return Trial(rule, p1, p2, RuleInstance(rule, p1.body, p2.body), _predicate(rng))


def gen_skip(rng):
    return _one_sided("Skip", 0, lambda s: "skip", rng)


def _gen_init(rule, side):
    return lambda rng: _one_sided(rule, side, lambda s: "q := |0>", rng)


def _gen_ut(rule, side):
    return lambda rng: _one_sided(rule, side, lambda s: s.unitary(), rng)


def _gen_so(rule, side):
    def make(s: Source) -> str:
        return s.channel() if s.rng.random() < 0.5 else f"{s.channel()}; {s.unitary()}"

    return lambda rng: _one_sided(rule, side, make, rng)


def gen_sc(rng, strong: bool = False):
    s1, s2 = Source(rng), Source(rng)
    if strong:
        p1 = s1.program(s1.if_stmt(), s1.unitary())
        p2 = s2.program(s2.if_stmt(), s2.unitary())
        (i1, u1), (i2, u2) = _stmts(p1), _stmts(p2)
        first = _if1_instance("IF1", i1, i2, None)
        parts = [first, RuleInstance("UT", u1, u2)]
        trial = Trial("SC+", p1, p2, RuleInstance("SC+", p1.body, p2.body, {"parts": parts}), _predicate(rng))
        trial.pending_pre = [(first, "IF1")]
        return trial
    p1 = s1.program(s1.unitary(), s1.channel())
    p2 = s2.program(s2.unitary(), s2.channel())
    (u1, e1), (u2, e2) = _stmts(p1), _stmts(p2)
    parts = [RuleInstance("UT", u1, u2), RuleInstance("SO", e1, e2)]
    return Trial("SC", p1, p2, RuleInstance("SC", p1.body, p2.body, {"parts": parts}), _predicate(rng))


def _branch_rule(left: Stmt, right: Stmt) -> RuleInstance:
    kinds = {(True, True): "UT", (True, False): "UT-L", (False, True): "UT-R", (False, False): "Skip"}
    return RuleInstance(kinds[(isinstance(left, Unitary), isinstance(right, Unitary))], left, right)


def gen_if(rng, rule: str):
    s1, s2 = Source(rng), Source(rng)
    p1 = s1.program(s1.if_stmt())
    p2 = s2.program(s2.if_stmt())
    l, r = p1.body, p2.body
    if rule == "IF-w":
        premises = {m: _branch_rule(l.branch(m), r.branch(m)) for m in (0, 1)}
    else:
        pairs = [(m, n) for m in (0, 1) for n in (0, 1)]
        keep = [pairs[i] for i in sorted(rng.choice(4, size=int(rng.integers(1, 5)), replace=False))]
        premises = {(m, n): _branch_rule(l.branch(m), r.branch(n)) for m, n in keep}
    return Trial(rule, p1, p2, RuleInstance(rule, l, r, premises), _predicate(rng))


def gen_if_side(rng, rule: str, side: int):
    s1, s2 = Source(rng), Source(rng)
    if side == 1:
        p1, p2 = s1.program(s1.if_stmt()), s2.program(s2.unitary())
        cond, other = p1.body, p2.body
        premises = {m: _branch_rule(cond.branch(m), other) for m in (0, 1)}
    else:
        p1, p2 = s1.program(s1.unitary()), s2.program(s2.if_stmt())
        cond, other = p2.body, p1.body
        premises = {m: _branch_rule(other, cond.branch(m)) for m in (0, 1)}
    return Trial(rule, p1, p2, RuleInstance(rule, p1.body, p2.body, premises), _predicate(rng))


def _if1_instance(rule: str, l: Stmt, r: Stmt, side_only: Optional[int]) -> RuleInstance:
    premises = {}
    for m in (0, 1):
        b1 = l.branch(m) if side_only != 2 else l
        b2 = r.branch(m) if side_only != 1 else r
        premises[m] = _branch_rule(b1, b2)
    return RuleInstance(rule, l, r, premises)


def gen_if1(rng, rule: str, side_only: Optional[int]):
    s1, s2 = Source(rng), Source(rng)
    p1 = s1.program(s1.if_stmt() if side_only != 2 else s1.unitary())
    p2 = s2.program(s2.if_stmt() if side_only != 1 else s2.unitary())
    inst = _if1_instance(rule, p1.body, p2.body, side_only)
    trial = Trial(rule, p1, p2, inst, _predicate(rng))
    trial.pending_pre = [(inst, rule)]
    return trial


def gen_lp(rng, rule: str, side_only: Optional[int], lp1: bool = False):
    s1, s2 = Source(rng), Source(rng)
    p1 = s1.program(s1.loop()) if side_only != 2 else s1.program()
    p2 = s2.program(s2.loop()) if side_only != 1 else s2.program()
    if lp1 and side_only is None:
        # the exit-distribution condition is only satisfiable in bulk for matching loops
        p2 = p1
    l, r = p1.body, p2.body
    body = _branch_rule(l.body if side_only != 2 else Skip(), r.body if side_only != 1 else Skip())
    inst = RuleInstance(rule, l, r, {"body": body})
    trial = Trial(rule, p1, p2, inst, _predicate(rng))
    trial.loop = (side_only, lp1)
    return trial


def gen_conseq(rng):
    t = _gen_ut("UT", 0)(rng)
    ctx = Context.of_programs(t.p1, t.p2)
    inner = t.inst
    inner_post = t.given * float(rng.uniform(0.3, 1.0))
    d = derive(inner, inner_post, ctx)
    pre = RegOp(d.pre.matrix * float(rng.uniform(0.3, 1.0)), d.pre.regs)
    inst = RuleInstance("Conseq", t.p1.body, t.p2.body, {"inner": inner}, {"pre": pre, "inner_post": inner_post})
    return Trial("Conseq", t.p1, t.p2, inst, t.given)


def gen_weaken(rng):
    t = _gen_ut("UT", 0)(rng)
    s1, s2 = Source(rng), Source(rng)
    m1, m2 = s1.measurement(), s2.measurement()
    q1, q2 = s1.program(f"if {m1}[q] = 0 -> skip [] 1 -> skip fi"), s2.program(f"if {m2}[q] = 0 -> skip [] 1 -> skip fi")
    cond = MeasEq(q1.body.meas, ("q",), q2.body.meas, ("q",))
    inst = RuleInstance("Weaken", t.p1.body, t.p2.body, {"inner": t.inst}, {"gamma": (cond,)})
    return Trial("Weaken", t.p1, t.p2, inst, t.given)


def gen_case(rng):
    t = _gen_ut("UT", 0)(rng)
    ctx = Context.of_programs(t.p1, t.p2)
    d = derive(t.inst, t.given, ctx)
    weaker = RuleInstance("Conseq", t.p1.body, t.p2.body, {"inner": t.inst}, {"pre": d.pre * float(rng.uniform(0.2, 0.9))})
    probs = rng.dirichlet([1.0, 1.0]).tolist()
    inst = RuleInstance("Case", t.p1.body, t.p2.body, {"cases": [t.inst, weaker]}, {"probs": probs})
    return Trial("Case", t.p1, t.p2, inst, t.given)


def gen_frame(rng):
    s1, s2 = Source(rng, "q : 2, e : 2"), Source(rng, "q : 2, e : 2")
    p1, p2 = s1.program(s1.unitary()), s2.program(s2.unitary())
    inner_post = _predicate(rng)
    frame = _predicate(rng, (E1, E2))
    post = RegOp(np.kron(inner_post.matrix, frame.matrix), JOINT + (E1, E2))
    inst = RuleInstance("Frame", p1.body, p2.body, {"inner": RuleInstance("UT", p1.body, p2.body)}, {"frame": frame, "inner_post": inner_post})
    return Trial("Frame", p1, p2, inst, post)


# payload construction for rules that take a user precondition ----------------------------

def _sync_expression(inst: RuleInstance, posts: dict, ctx: Context, side_only: Optional[int]) -> np.ndarray:
    """``sum_m (M_m (x) N_m)^dag B_m (M_m (x) N_m)`` on the joint layout."""
    from .spaces import conjugate_local, lookup

    total = 0
    for m, b in posts.items():
        ops, targets = [], ()
        if side_only != 2:
            ops.append(inst.left.meas[m])
            targets += lookup(ctx.joint, ["q<1>"])
        if side_only != 1:
            ops.append(inst.right.meas[m])
            targets += lookup(ctx.joint, ["q<2>"])
        total = total + conjugate_local([la.dag(la.tensor(*ops))], b.on(ctx.joint), ctx.joint, targets)
    return 0.5 * (total + la.dag(total))


def _fill_if1_pre(inst: RuleInstance, post: RegOp, ctx: Context, rng, shrink: float) -> None:
    rule = inst.rule
    side_only = {"IF1": None, "IF1-L": 1, "IF1-R": 2}[rule]
    posts = {m: derive(inst.premises[m], post, ctx).pre for m in (0, 1)}
    sync = _sync_expression(inst, posts, ctx, side_only)
    inst.payload["pre"] = RegOp(sync * shrink * float(rng.uniform(0.5, 1.0)), ctx.joint)


def _fill_loop_payload(trial: Trial, ctx: Context, rng, shrink: float) -> None:
    side_only, lp1 = trial.loop
    inst = trial.inst
    body = inst.premises["body"]
    lw = inst.left if side_only != 2 else None
    rw = inst.right if side_only != 1 else None
    meas_inst = RuleInstance("", lw if lw is not None else inst.left, rw if rw is not None else inst.right)

    def expr(b: np.ndarray) -> np.ndarray:
        posts = {0: trial.given, 1: RegOp(b, ctx.joint)}
        return _sync_expression(meas_inst, posts, ctx, side_only)

    def body_dual(a: np.ndarray) -> np.ndarray:
        return derive(body, RegOp(a, ctx.joint), ctx).pre.on(ctx.joint)

    steps = int(rng.integers(3, 40))
    b = np.zeros((4, 4), dtype=complex)
    for _ in range(steps):
        b = body_dual(expr(b))
    if lp1:
        b1 = b
        a = expr(b1)
        inst.payload.update(pre=RegOp(a * shrink, ctx.joint), b1=RegOp(b1 * shrink, ctx.joint))
    else:
        inst.payload["invariant"] = RegOp(b * shrink, ctx.joint)


# projective rule generators -------------------------------------------------------------

def _fwd_simple(rule: str, side: int, make):
    def gen(rng):
        t = _one_sided(rule, side, make, rng)
        t.given, t.forward = _projector(rng), True
        return t

    return gen


def gen_sc_p(rng):
    s1, s2 = Source(rng), Source(rng)
    p1 = s1.program(s1.unitary(), s1.channel())
    p2 = s2.program(s2.unitary(), s2.channel())
    (u1, e1), (u2, e2) = _stmts(p1), _stmts(p2)
    parts = [RuleInstance("UT-P", u1, u2), RuleInstance("SO-P", e1, e2)]
    return Trial("SC-P", p1, p2, RuleInstance("SC-P", p1.body, p2.body, {"parts": parts}), _projector(rng), True)


def _span(*ps: np.ndarray) -> np.ndarray:
    return la.support_projector(sum(ps))


def gen_conseq_p(rng):
    t = _fwd_simple("UT-P", 0, lambda s: s.unitary())(rng)
    ctx = Context.of_programs(t.p1, t.p2)
    inner_pre = RegOp(_span(t.given.matrix, _projector(rng, rank=1).matrix), JOINT)
    d = derive_forward(t.inst, inner_pre, ctx)
    post = RegOp(_span(d.post.on(d.post.regs), _projector(rng, d.post.regs, rank=1).matrix), d.post.regs)
    inst = RuleInstance("Conseq-P", t.p1.body, t.p2.body, {"inner": t.inst}, {"inner_pre": inner_pre, "post": post})
    return Trial("Conseq-P", t.p1, t.p2, inst, t.given, True)


def gen_frame_p(rng):
    s1, s2 = Source(rng, "q : 2, e : 2"), Source(rng)
    p1, p2 = s1.program(s1.unitary()), s2.program(s2.unitary())
    a = _projector(rng)
    c = _projector(rng, (E1,), rank=1)
    pre = RegOp(np.kron(a.matrix, c.matrix), JOINT + (E1,))
    inst = RuleInstance("Frame-P", p1.body, p2.body, {"inner": RuleInstance("UT-P", p1.body, p2.body)}, {"frame": c, "inner_pre": a})
    return Trial("Frame-P", p1, p2, inst, pre, True)


def gen_if_p(rng, rule: str, side_only: Optional[int]):
    s1, s2 = Source(rng), Source(rng)
    p1 = s1.program(s1.if_stmt() if side_only != 2 else s1.unitary())
    p2 = s2.program(s2.if_stmt() if side_only != 1 else s2.unitary())
    inst = _if1_instance(rule, p1.body, p2.body, side_only)
    for m in (0, 1):
        inst.premises[m] = RuleInstance(inst.premises[m].rule.replace("UT", "UT-P").replace("Skip", "Skip-P"), inst.premises[m].left, inst.premises[m].right)
    trial = Trial(rule, p1, p2, inst, _projector(rng), True)
    trial.branch_side = side_only
    return trial


def _fill_branch_pre(trial: Trial, ctx: Context, attempt: int) -> None:
    from .spaces import conjugate_local, lookup

    side_only = trial.branch_side
    inst = trial.inst
    a = trial.given.on(ctx.joint)
    branch = {}
    for m in (0, 1):
        if attempt > 0:
            branch[m] = RegOp(np.eye(4), ctx.joint)
            continue
        ops, targets = [], ()
        if side_only != 2:
            ops.append(inst.left.meas[m])
            targets += lookup(ctx.joint, ["q<1>"])
        if side_only != 1:
            ops.append(inst.right.meas[m])
            targets += lookup(ctx.joint, ["q<2>"])
        branch[m] = RegOp(la.support_projector(conjugate_local([la.tensor(*ops)], a, ctx.joint, targets)), ctx.joint)
    inst.payload["branch_pre"] = branch


def gen_lp_p(rng, rule: str, side_only: Optional[int]):
    s1, s2 = Source(rng), Source(rng)
    p1 = s1.program(s1.loop()) if side_only != 2 else s1.program()
    p2 = s2.program(s2.loop()) if side_only != 1 else s2.program()
    l, r = p1.body, p2.body
    body = RuleInstance(
        {None: "UT-P", 1: "UT-P-L", 2: "UT-P-R"}[side_only], l.body if side_only != 2 else Skip(), r.body if side_only != 1 else Skip()
    )
    inst = RuleInstance(rule, l, r, {"body": body})
    trial = Trial(rule, p1, p2, inst, _projector(rng, rank=int(rng.integers(1, 3))), True)
    trial.loop = (side_only, False)
    return trial


def _fill_loop_projective(trial: Trial, ctx: Context) -> None:
    """Close the precondition under one loop iteration; exit/continue predicates are its images."""
    from .spaces import conjugate_local, lookup

    side_only, _ = trial.loop
    inst = trial.inst
    ops0, ops1, units, targets = [], [], [], ()
    if side_only != 2:
        ops0.append(inst.left.meas[0]); ops1.append(inst.left.meas[1]); units.append(inst.left.body.gate.matrix)
        targets += lookup(ctx.joint, ["q<1>"])
    if side_only != 1:
        ops0.append(inst.right.meas[0]); ops1.append(inst.right.meas[1]); units.append(inst.right.body.gate.matrix)
        targets += lookup(ctx.joint, ["q<2>"])
    m0, m1, u = la.tensor(*ops0), la.tensor(*ops1), la.tensor(*units)
    p = trial.given.on(ctx.joint)
    for _ in range(8):
        cont = la.support_projector(conjugate_local([m1], p, ctx.joint, targets))
        nxt = la.support_projector(p + conjugate_local([u], cont, ctx.joint, targets))
        if la.max_abs(nxt - p) < 1e-9:
            break
        p = nxt
    trial.given = RegOp(p, ctx.joint)
    b1 = la.support_projector(conjugate_local([m1], p, ctx.joint, targets))
    b0 = la.support_projector(conjugate_local([m0], p, ctx.joint, targets))
    inst.payload.update(b0=RegOp(b0, ctx.joint), b1=RegOp(b1, ctx.joint))


# registry -----------------------------------------------------------------------------------

GENERATORS: dict[str, Callable] = {
    "Skip": gen_skip,
    "Init": _gen_init("Init", 0),
    "Init-L": _gen_init("Init-L", 1),
    "Init-R": _gen_init("Init-R", 2),
    "UT": _gen_ut("UT", 0),
    "UT-L": _gen_ut("UT-L", 1),
    "UT-R": _gen_ut("UT-R", 2),
    "SO": _gen_so("SO", 0),
    "SO-L": _gen_so("SO-L", 1),
    "SO-R": _gen_so("SO-R", 2),
    "SC": lambda rng: gen_sc(rng),
    "SC+": lambda rng: gen_sc(rng, strong=True),
    "IF": lambda rng: gen_if(rng, "IF"),
    "IF-w": lambda rng: gen_if(rng, "IF-w"),
    "IF-L": lambda rng: gen_if_side(rng, "IF-L", 1),
    "IF-R": lambda rng: gen_if_side(rng, "IF-R", 2),
    "IF1": lambda rng: gen_if1(rng, "IF1", None),
    "IF1-L": lambda rng: gen_if1(rng, "IF1-L", 1),
    "IF1-R": lambda rng: gen_if1(rng, "IF1-R", 2),
    "LP": lambda rng: gen_lp(rng, "LP", None),
    "LP-L": lambda rng: gen_lp(rng, "LP-L", 1),
    "LP-R": lambda rng: gen_lp(rng, "LP-R", 2),
    "LP1": lambda rng: gen_lp(rng, "LP1", None, lp1=True),
    "LP1-L": lambda rng: gen_lp(rng, "LP1-L", 1, lp1=True),
    "LP1-R": lambda rng: gen_lp(rng, "LP1-R", 2, lp1=True),
    "Conseq": gen_conseq,
    "Weaken": gen_weaken,
    "Case": gen_case,
    "Frame": gen_frame,
    "Skip-P": _fwd_simple("Skip-P", 0, lambda s: "skip"),
    "UT-P": _fwd_simple("UT-P", 0, lambda s: s.unitary()),
    "UT-P-L": _fwd_simple("UT-P-L", 1, lambda s: s.unitary()),
    "UT-P-R": _fwd_simple("UT-P-R", 2, lambda s: s.unitary()),
    "Init-P": _fwd_simple("Init-P", 0, lambda s: "q := |0>"),
    "Init-P-L": _fwd_simple("Init-P-L", 1, lambda s: "q := |0>"),
    "Init-P-R": _fwd_simple("Init-P-R", 2, lambda s: "q := |0>"),
    "SO-P": _fwd_simple("SO-P", 0, lambda s: s.channel()),
    "SO-P-L": _fwd_simple("SO-P-L", 1, lambda s: s.channel()),
    "SO-P-R": _fwd_simple("SO-P-R", 2, lambda s: s.channel()),
    "SC-P": gen_sc_p,
    "Conseq-P": gen_conseq_p,
    "Frame-P": gen_frame_p,
    "IF-P": lambda rng: gen_if_p(rng, "IF-P", None),
    "IF-P-L": lambda rng: gen_if_p(rng, "IF-P-L", 1),
    "IF-P-R": lambda rng: gen_if_p(rng, "IF-P-R", 2),
    "LP-P": lambda rng: gen_lp_p(rng, "LP-P", None),
    "LP-P-L": lambda rng: gen_lp_p(rng, "LP-P-L", 1),
    "LP-P-R": lambda rng: gen_lp_p(rng, "LP-P-R", 2),
}


def _prepare(trial: Trial, ctx: Context, rng, attempt: int) -> None:
    shrink = 0.5**attempt
    for inst, _ in getattr(trial, "pending_pre", ()):
        _fill_if1_pre(inst, trial.given, ctx, rng, shrink)
    if hasattr(trial, "loop") and not trial.forward:
        _fill_loop_payload(trial, ctx, rng, shrink)
    if hasattr(trial, "loop") and trial.forward and attempt == 0:
        _fill_loop_projective(trial, ctx)
    if hasattr(trial, "branch_side"):
        _fill_branch_pre(trial, ctx, attempt)


def _sc_plus_post(trial: Trial, ctx: Context) -> RegOp:
    """IF1 inside SC+ is applied to the UT part's precondition, not to the final postcondition."""
    first, ut = trial.inst.premises["parts"]
    return derive(ut, trial.given, ctx.after(first.left, first.right)).pre


def derive_trial(trial: Trial, rng, sampler: Sampler, max_attempts: int = 4):
    """Derive the conclusion, retrying with weaker payloads until every obligation holds."""
    ctx = Context.of_programs(trial.p1, trial.p2)
    for attempt in range(max_attempts):
        if trial.rule == "SC+":
            first = trial.inst.premises["parts"][0]
            _fill_if1_pre(first, _sc_plus_post(trial, ctx), ctx, rng, 0.5**attempt)
        else:
            _prepare(trial, ctx, rng, attempt)
        d = derive_forward(trial.inst, trial.given, ctx) if trial.forward else derive(trial.inst, trial.given, ctx)
        for ob in d.obligations:
            discharge(ob, "strict", sampler)
        if all(ob.status == "passed" for ob in d.obligations):
            return d
    return None


def check_trial(trial: Trial, d, sampler: Sampler):
    if trial.forward:
        return check_projective_judgment(trial.p1, trial.p2, d.pre, d.post, sampler)
    return check_judgment(Judgment(trial.p1, trial.p2, d.pre, d.post, d.gamma), sampler)


def run_rule(rule: str, instances: int = 10, samples: int = 100, seed: int = 0, max_draws: int = 40) -> RuleOutcome:
    out = RuleOutcome(rule)
    gen = GENERATORS[rule]
    for draw in range(max_draws):
        if out.instances >= instances:
            break
        rng = np.random.default_rng([seed, draw, sum(map(ord, rule))])
        trial = gen(rng)
        try:
            d = derive_trial(trial, rng, Sampler(count=20, seed=draw))
        except RuleError as exc:
            out.failures.append(f"draw {draw}: rule error {exc}")
            out.rejected += 1
            continue
        if d is None:
            out.rejected += 1
            continue
        v = check_trial(trial, d, Sampler(count=samples, seed=1000 + draw))
        out.instances += 1
        out.worst_margin = min(out.worst_margin, v.worst_margin)
        if v.status == "falsified":
            out.falsified += 1
            out.failures.append(f"draw {draw}: falsified at {v.counterexample_label} (margin {v.worst_margin:.3g})")
        elif v.status != "passed":
            out.inconclusive += 1
            out.failures.append(f"draw {draw}: {v.status} {'; '.join(v.notes)}")
    return out


# single-program partial correctness ----------------------------------------------------------

def partial_correctness_trial(rng):
    """A loop that may diverge, a random postcondition and the precondition the loop rule gives."""
    s = Source(rng)
    m = s.measurement(projective=True)
    if rng.random() < 0.5:
        # identity body: states inside the continue subspace never leave
        p = s.program(f"while {m}[q] = 1 do skip od")
    else:
        p = s.program(f"while {m}[q] = 1 do {s.unitary()} od")
    regs = p.input_regs
    post = RegOp(la.random_predicate(2, rng), regs)
    loop = p.body
    m0, m1 = loop.meas[0], loop.meas[1]

    def body_dual(a):
        return run_dual(loop.body, a, regs, {r.name: r for r in p.registers})[0]

    # iterate down to the greatest fixed point; any (1 - eps) multiple of it is an invariant
    inv = np.eye(2, dtype=complex)
    for _ in range(400):
        inv = body_dual(la.dag(m0) @ post.matrix @ m0 + la.dag(m1) @ inv @ m1)
    inv = inv * (1.0 - float(rng.uniform(0.0, 0.3)))
    body_rule = RuleInstance("Ax.UT" if not isinstance(loop.body, Skip) else "Ax.Sk", loop.body)
    inst = RuleInstance("R.LP", loop, premises={"body": body_rule}, payload={"invariant": RegOp(inv, regs)})
    d = qpd_derive(inst, post, regs)
    return p, d.pre, post, d


def partial_correctness_margin(p: Program, pre: RegOp, post: RegOp, rho: np.ndarray) -> float:
    """``tr(post E(rho)) + tr(rho) - tr(E(rho)) - tr(pre rho)``; non-negative when the triple holds."""
    out, regs = run(p, rho)
    lhs = float(np.real(np.trace(pre.on(p.input_regs) @ rho)))
    rhs = float(np.real(np.trace(post.on(regs) @ out))) + float(np.real(np.trace(rho) - np.trace(out)))
    return rhs - lhs


@lru_cache(maxsize=None)
def rule_outcome(rule: str, instances: int = 10, samples: int = 100, seed: int = 0) -> RuleOutcome:
    """Memoized ``run_rule``; the per-rule tests and the summary share one run."""
    return run_rule(rule, instances, samples, seed)


def full_report(instances: int = 10, samples: int = 100, seed: int = 0) -> tuple[RuleOutcome, ...]:
    return tuple(rule_outcome(r, instances, samples, seed) for r in GENERATORS)
