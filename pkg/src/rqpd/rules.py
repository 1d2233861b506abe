"""Inference rules as executable predicate transformers.

A :class:`RuleInstance` names a rule, the two program fragments it relates
and whatever the rule needs from the user (branch predicates, loop
invariants, probabilities, framed predicates).  :func:`derive` runs a rule
backwards from a postcondition and returns the precondition together with
the side conditions it introduces and the obligations its premises leave
open.  The projective rules are stated forward in their original form, so
:func:`derive_forward` computes postconditions from preconditions instead.

Fragments are untagged statements; predicates live on the tagged joint
register space described by a :class:`Context`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import linalg as la
from .judgment import MeasEq, MeasLoopEq, Separability
from .lang.ast import ApplySuper, IfMeas, Init, Program, Seq, Skip, Stmt, TraceOut, Unitary, WhileMeas, seq, tag_copy, variables
from .semantics import flow, init_kraus
from .spaces import Register, RegOp, Regs, conjugate_local, extend, lookup, names, reduce_to, tag_name, total_dim, untag_name

PREDICATE_TOL = 1e-8


class RuleError(ValueError):
    """A rule was applied to fragments or payloads that do not fit its schema."""


@dataclass
class RuleInstance:
    rule: str
    left: Stmt = field(default_factory=Skip)
    right: Stmt = field(default_factory=Skip)
    premises: dict = field(default_factory=dict)
    payload: dict = field(default_factory=dict)


@dataclass
class Obligation:
    kind: str  # loewner | losslessness | measurement-judgment | couple-entailment | separability | projective-lifting
    description: str
    payload: dict
    discharge: str  # analytic | judgment-engine | unchecked-assumption
    status: str = "pending"
    residual: float = float("nan")
    empirical: bool = False


@dataclass
class Derived:
    """Result of a rule application; ``pre`` and ``post`` are both on tagged registers."""

    pre: RegOp
    post: RegOp
    gamma: tuple = ()
    obligations: list[Obligation] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


# register context -------------------------------------------------------------------

@dataclass(frozen=True)
class Context:
    """Live tagged registers before a fragment pair, plus declarations for born registers."""

    joint: Regs
    decl: tuple[Register, ...] = ()

    @classmethod
    def of(cls, regs1: Sequence[Register], regs2: Sequence[Register], decl1: Sequence[Register] = (), decl2: Sequence[Register] = ()) -> "Context":
        joint = tuple(r.tagged(1) for r in regs1) + tuple(r.tagged(2) for r in regs2)
        decl = tuple(r.tagged(1) for r in decl1) + tuple(r.tagged(2) for r in decl2)
        return cls(joint, decl)

    @classmethod
    def of_programs(cls, p1: Program, p2: Program) -> "Context":
        return cls.of(p1.input_regs, p2.input_regs, p1.registers, p2.registers)

    @property
    def decl_map(self) -> dict[str, Register]:
        return {r.name: r for r in self.decl}

    def side(self, k: int) -> Regs:
        suffix = f"<{k}>"
        return tuple(r for r in self.joint if r.name.endswith(suffix))

    def untagged(self, k: int) -> Regs:
        return tuple(Register(untag_name(r.name), r.dim) for r in self.side(k))

    def untagged_decl(self, k: int) -> Regs:
        suffix = f"<{k}>"
        return tuple(Register(untag_name(r.name), r.dim) for r in self.decl if r.name.endswith(suffix))

    def after(self, left: Stmt, right: Stmt) -> "Context":
        lay = flow(tag_copy(left, 1), self.joint, self.decl_map)
        lay = flow(tag_copy(right, 2), lay, self.decl_map)
        return Context(lay, self.decl)

    def program(self, k: int, body: Stmt) -> Program:
        """The fragment ``body`` on side ``k`` as a standalone program."""
        live = self.untagged(k)
        present = set(names(live))
        extra = tuple(r for r in self.untagged_decl(k) if r.name not in present and r.name in set(variables(body)))
        return Program(live + extra, body)


def infer_context(post: RegOp, *fragments: Stmt) -> Context:
    """Live registers read off a postcondition's support (all fragments must stay inside it)."""
    regs = tuple(post.regs)
    side1 = tuple(r for r in regs if r.name.endswith("<1>"))
    side2 = tuple(r for r in regs if r.name.endswith("<2>"))
    return Context(side1 + side2)


def _full(op: RegOp, layout: Regs) -> np.ndarray:
    missing = set(names(op.regs)) - set(names(layout))
    if missing:
        raise RuleError(f"predicate mentions {sorted(missing)} which are not live here ({names(layout)})")
    return op.on(layout)


def _op(m: np.ndarray, layout: Regs) -> RegOp:
    return RegOp(0.5 * (m + la.dag(m)), layout)


def _tagged(s: Stmt, side: int) -> Stmt:
    return tag_copy(s, side)


def _is_skip(s: Stmt) -> bool:
    return isinstance(s, Skip) or (isinstance(s, Seq) and not s.stmts)


def _expect_type(s: Stmt, kind, rule: str, side: str) -> None:
    if not isinstance(s, kind):
        wanted = kind.__name__ if isinstance(kind, type) else " or ".join(k.__name__ for k in kind)
        raise RuleError(f"({rule}) expects {wanted} on the {side}, got {type(s).__name__}")


def _expect_skip(s: Stmt, rule: str, side: str) -> None:
    if not _is_skip(s):
        raise RuleError(f"({rule}) expects skip on the {side}, got {type(s).__name__}")


def _check_fragment(sub: RuleInstance, left: Stmt, right: Stmt, rule: str) -> None:
    if seq(sub.left) != seq(left) or seq(sub.right) != seq(right):
        raise RuleError(f"({rule}) premise {sub.rule} does not relate the expected fragments")


def predicate_violation(op: RegOp) -> float:
    """How far an operator is from satisfying ``0 <= A <= I`` (0 when it does)."""
    w = la.eigvalsh(op.matrix)
    return float(max(0.0, -w[0], w[-1] - 1.0))


def _loewner(lower: RegOp, upper: RegOp, what: str) -> Obligation:
    return Obligation("loewner", what, {"lower": lower, "upper": upper}, "analytic")


def _lossless(stmt_tagged: Stmt, ctx: Context, what: str) -> Obligation:
    return Obligation("losslessness", what, {"stmt": stmt_tagged, "regs": ctx.joint, "decl": ctx.decl}, "analytic")


# basic statements as Kraus actions on the joint space ----------------------------

def _kraus_of(s: Stmt, layout: Regs, decl: dict[str, Register]) -> tuple[list[np.ndarray], Regs, Regs, Regs]:
    """Kraus operators with their input/output registers and the layout after ``s``."""
    after = flow(s, layout, decl)
    if isinstance(s, Init):
        t = lookup(layout, [s.reg])
        return init_kraus(t[0].dim), t, t, after
    if isinstance(s, Unitary):
        t = lookup(layout, s.regs)
        return [s.gate.matrix], t, t, after
    if isinstance(s, ApplySuper):
        ins = lookup(layout, s.ins)
        pool = decl | {r.name: r for r in layout}
        outs = tuple(pool[n] for n in s.outs)
        return s.channel.kraus, ins, outs, after
    if isinstance(s, TraceOut):
        t = lookup(layout, [s.reg])
        d = t[0].dim
        return [la.ket(i, d).reshape(1, d) for i in range(d)], t, (), after
    raise RuleError(f"{type(s).__name__} is not a basic quantum operation")


def dual_basic(s: Stmt, pred: np.ndarray, layout: Regs, decl: dict[str, Register]) -> np.ndarray:
    """``E*`` of a basic statement: ``pred`` on the layout after ``s``, result on ``layout``."""
    if _is_skip(s):
        return pred
    if isinstance(s, Seq):
        layouts = [layout]
        for t in s.stmts[:-1]:
            layouts.append(flow(t, layouts[-1], decl))
        for t, lay in zip(reversed(s.stmts), reversed(layouts)):
            pred = dual_basic(t, pred, lay, decl)
        return pred
    kraus, ins, outs, after = _kraus_of(s, layout, decl)
    if isinstance(s, TraceOut):
        return extend(pred, after, layout)
    return conjugate_local([la.dag(k) for k in kraus], pred, after, outs, ins, layout)


def forward_basic(s: Stmt, op: np.ndarray, layout: Regs, decl: dict[str, Register]) -> tuple[np.ndarray, Regs]:
    """``E`` of a basic statement applied to an operator on ``layout``."""
    if _is_skip(s):
        return op, layout
    if isinstance(s, Seq):
        for t in s.stmts:
            op, layout = forward_basic(t, op, layout, decl)
        return op, layout
    kraus, ins, outs, after = _kraus_of(s, layout, decl)
    if isinstance(s, TraceOut):
        return reduce_to(op, layout, after), after
    return conjugate_local(kraus, op, layout, ins, outs, after), after


def _basic_ok(s: Stmt) -> bool:
    if _is_skip(s):
        return True
    if isinstance(s, Seq):
        return all(_basic_ok(t) for t in s.stmts)
    return isinstance(s, (Init, Unitary, ApplySuper, TraceOut))


# construct-specific rules ---------------------------------------------------------

def _rule_skip(inst: RuleInstance, post: RegOp, ctx: Context) -> Derived:
    _expect_skip(inst.left, "Skip", "left")
    _expect_skip(inst.right, "Skip", "right")
    return Derived(post, post)


def _init_targets(inst: RuleInstance, ctx: Context, sides: str, rule: str) -> tuple[Regs, list[int]]:
    targets, dims_ = [], []
    for k, s in ((1, inst.left), (2, inst.right)):
        if str(k) in sides:
            _expect_type(s, Init, rule, "left" if k == 1 else "right")
            r = lookup(ctx.joint, [tag_name(s.reg, k)])[0]
            targets.append(r)
            dims_.append(r.dim)
        else:
            _expect_skip(s, rule, "left" if k == 1 else "right")
    return tuple(targets), dims_


def _rule_init(sides: str, rule: str):
    def apply(inst: RuleInstance, post: RegOp, ctx: Context) -> Derived:
        targets, ds = _init_targets(inst, ctx, sides, rule)
        a = _full(post, ctx.joint)
        zero = la.tensor(*[la.ket(0, d).reshape(1, d) for d in ds])
        # sum over |i><0| (x) |j><0| ... as the conjugating family
        ops = []
        for idx in np.ndindex(*ds):
            bra = la.tensor(*[la.ket(i, d).reshape(1, d) for i, d in zip(idx, ds)])
            k = zero.T @ bra  # |0..0><i j|
            ops.append(la.dag(k))
        pre = conjugate_local(ops, a, ctx.joint, targets)
        return Derived(_op(pre, ctx.joint), post)

    return apply


def _unitary_of(s: Stmt, k: int, ctx: Context) -> tuple[np.ndarray, Regs]:
    t = lookup(ctx.joint, [tag_name(n, k) for n in s.regs])
    return s.gate.matrix, t


def _rule_ut(sides: str, rule: str):
    def apply(inst: RuleInstance, post: RegOp, ctx: Context) -> Derived:
        mats, targets = [], ()
        for k, s in ((1, inst.left), (2, inst.right)):
            side = "left" if k == 1 else "right"
            if str(k) in sides:
                _expect_type(s, Unitary, rule, side)
                u, t = _unitary_of(s, k, ctx)
                mats.append(u)
                targets += t
            else:
                _expect_skip(s, rule, side)
        u = la.tensor(*mats)
        pre = conjugate_local([la.dag(u)], _full(post, ctx.joint), ctx.joint, targets)
        return Derived(_op(pre, ctx.joint), post)

    return apply


def _rule_so(sides: str, rule: str):
    def apply(inst: RuleInstance, post: RegOp, ctx: Context) -> Derived:
        obligations = []
        stmts = []
        for k, s in ((1, inst.left), (2, inst.right)):
            side = "left" if k == 1 else "right"
            if str(k) in sides:
                if not _basic_ok(s) or _is_skip(s):
                    raise RuleError(f"({rule}) expects a quantum operation on the {side}")
                stmts.append(_tagged(s, k))
                obligations.append(_lossless(_tagged(s, k), ctx, f"{side} operation is trace-preserving"))
            else:
                _expect_skip(s, rule, side)
                stmts.append(Skip())
        decl = ctx.decl_map
        mid = flow(stmts[0], ctx.joint, decl)
        after = flow(stmts[1], mid, decl)
        a = _full(post, after)
        a = dual_basic(stmts[1], a, mid, decl)
        a = dual_basic(stmts[0], a, ctx.joint, decl)
        return Derived(_op(a, ctx.joint), post, (), obligations)

    return apply


def _meas_regs(s, k: int, ctx: Context) -> Regs:
    return lookup(ctx.joint, [tag_name(n, k) for n in s.regs])


def _no_gamma(d: Derived, rule: str) -> None:
    if d.gamma:
        raise RuleError(f"({rule}) premises must be derived without side conditions")


def _rule_if_two(diagonal: bool, rule: str):
    def apply(inst: RuleInstance, post: RegOp, ctx: Context) -> Derived:
        _expect_type(inst.left, IfMeas, rule, "left")
        _expect_type(inst.right, IfMeas, rule, "right")
        l, r = inst.left, inst.right
        if diagonal and l.meas.outcomes != r.meas.outcomes:
            raise RuleError(f"({rule}) needs matching outcome sets")
        t1, t2 = _meas_regs(l, 1, ctx), _meas_regs(r, 2, ctx)
        total = np.zeros((total_dim(ctx.joint),) * 2, dtype=complex)
        obligations, notes = [], []
        if not inst.premises:
            raise RuleError(f"({rule}) needs at least one branch premise")
        for key, sub in inst.premises.items():
            m, n = (key, key) if diagonal else key
            _check_fragment(sub, l.branch(m), r.branch(n), rule)
            d = derive(sub, post, ctx)
            _no_gamma(d, rule)
            obligations += d.obligations
            op = la.tensor(l.meas[m], r.meas[n])
            total += conjugate_local([la.dag(op)], _full(d.pre, ctx.joint), ctx.joint, t1 + t2)
        for k, b in l.branches:
            obligations.append(_lossless(_tagged(b, 1), ctx, f"left branch {k} lossless"))
        for k, b in r.branches:
            obligations.append(_lossless(_tagged(b, 2), ctx, f"right branch {k} lossless"))
        notes.append("losslessness required for every branch, not only those in the chosen pairs")
        return Derived(_op(total, ctx.joint), post, (), obligations, notes)

    return apply


def _rule_if_one(side: int, rule: str):
    def apply(inst: RuleInstance, post: RegOp, ctx: Context) -> Derived:
        cond_stmt, other = (inst.left, inst.right) if side == 1 else (inst.right, inst.left)
        _expect_type(cond_stmt, IfMeas, rule, "left" if side == 1 else "right")
        targets = _meas_regs(cond_stmt, side, ctx)
        total = np.zeros((total_dim(ctx.joint),) * 2, dtype=complex)
        obligations = []
        for m, _ in cond_stmt.branches:
            if m not in inst.premises:
                raise RuleError(f"({rule}) is missing the premise for outcome {m}")
            sub = inst.premises[m]
            pair = (cond_stmt.branch(m), other) if side == 1 else (other, cond_stmt.branch(m))
            _check_fragment(sub, *pair, rule)
            d = derive(sub, post, ctx)
            _no_gamma(d, rule)
            obligations += d.obligations
            total += conjugate_local([la.dag(cond_stmt.meas[m])], _full(d.pre, ctx.joint), ctx.joint, targets)
        return Derived(_op(total, ctx.joint), post, (), obligations)

    return apply


def _meas_condition(left, right, side_only: Optional[int] = None) -> MeasEq:
    if side_only == 1:
        return MeasEq(left.meas, left.regs, None, ())
    if side_only == 2:
        return MeasEq(None, (), right.meas, right.regs)
    return MeasEq(left.meas, left.regs, right.meas, right.regs)


def _meas_obligation(kind: str, cond: MeasEq, pre: RegOp, posts: dict, ctx: Context, what: str) -> Obligation:
    return Obligation(
        kind,
        what,
        {"cond": cond, "pre": pre, "posts": posts, "regs1": ctx.side(1), "regs2": ctx.side(2)},
        "judgment-engine",
        empirical=True,
    )


def _payload(inst: RuleInstance, key: str, rule: str):
    try:
        return inst.payload[key]
    except KeyError:
        raise RuleError(f"({rule}) needs payload {key!r}") from None


def _rule_if1(side_only: Optional[int], rule: str):
    def apply(inst: RuleInstance, post: RegOp, ctx: Context) -> Derived:
        l, r = inst.left, inst.right
        if side_only != 2:
            _expect_type(l, IfMeas, rule, "left")
        if side_only != 1:
            _expect_type(r, IfMeas, rule, "right")
        outcomes = (l if side_only != 2 else r).meas.outcomes
        if side_only is None and l.meas.outcomes != r.meas.outcomes:
            raise RuleError(f"({rule}) needs matching outcome sets")
        a = _payload(inst, "pre", rule)
        posts, obligations = {}, []
        for m in outcomes:
            if m not in inst.premises:
                raise RuleError(f"({rule}) is missing the premise for outcome {m}")
            b1 = l.branch(m) if side_only != 2 else l
            b2 = r.branch(m) if side_only != 1 else r
            _check_fragment(inst.premises[m], b1, b2, rule)
            d = derive(inst.premises[m], post, ctx)
            _no_gamma(d, rule)
            obligations += d.obligations
            posts[m] = d.pre
        cond = _meas_condition(l, r, side_only)
        obligations.append(_meas_obligation("measurement-judgment", cond, a, posts, ctx, f"{cond} |= pre => branch predicates"))
        gamma = (cond,) if side_only is None else ()
        return Derived(a, post, gamma, obligations)

    return apply


def _loop_expression(l: WhileMeas | None, r: WhileMeas | None, a: np.ndarray, b: np.ndarray, ctx: Context) -> np.ndarray:
    ops0, ops1, targets = [], [], ()
    if l is not None:
        ops0.append(l.meas[0])
        ops1.append(l.meas[1])
        targets += _meas_regs(l, 1, ctx)
    if r is not None:
        ops0.append(r.meas[0])
        ops1.append(r.meas[1])
        targets += _meas_regs(r, 2, ctx)
    m0, m1 = la.tensor(*ops0), la.tensor(*ops1)
    return conjugate_local([la.dag(m0)], a, ctx.joint, targets) + conjugate_local([la.dag(m1)], b, ctx.joint, targets)


def _rule_lp(side_only: Optional[int], rule: str, require_lossless: bool = True):
    def apply(inst: RuleInstance, post: RegOp, ctx: Context) -> Derived:
        l, r = inst.left, inst.right
        if side_only != 2:
            _expect_type(l, WhileMeas, rule, "left")
        else:
            _expect_skip(l, rule, "left")
        if side_only != 1:
            _expect_type(r, WhileMeas, rule, "right")
        else:
            _expect_skip(r, rule, "right")
        lw = l if side_only != 2 else None
        rw = r if side_only != 1 else None
        b = _payload(inst, "invariant", rule)
        expr = _op(_loop_expression(lw, rw, _full(post, ctx.joint), _full(b, ctx.joint), ctx), ctx.joint)
        body = inst.premises.get("body")
        if body is None:
            raise RuleError(f"({rule}) needs the body premise")
        _check_fragment(body, lw.body if lw else Skip(), rw.body if rw else Skip(), rule)
        d = derive(body, expr, ctx)
        _no_gamma(d, rule)
        obligations = list(d.obligations)
        obligations.append(_loewner(b, d.pre, "loop invariant below the derived body precondition"))
        if require_lossless:
            if lw is not None:
                obligations.append(_lossless(_tagged(lw, 1), ctx, "left loop lossless"))
            if rw is not None:
                obligations.append(_lossless(_tagged(rw, 2), ctx, "right loop lossless"))
        return Derived(expr, post, (), obligations)

    return apply


def _rule_lp1(side_only: Optional[int], rule: str):
    def apply(inst: RuleInstance, post: RegOp, ctx: Context) -> Derived:
        l, r = inst.left, inst.right
        if side_only != 2:
            _expect_type(l, WhileMeas, rule, "left")
        else:
            _expect_skip(l, rule, "left")
        if side_only != 1:
            _expect_type(r, WhileMeas, rule, "right")
        else:
            _expect_skip(r, rule, "right")
        lw = l if side_only != 2 else None
        rw = r if side_only != 1 else None
        a = _payload(inst, "pre", rule)
        b1 = _payload(inst, "b1", rule)
        body = inst.premises.get("body")
        if body is None:
            raise RuleError(f"({rule}) needs the body premise")
        _check_fragment(body, lw.body if lw else Skip(), rw.body if rw else Skip(), rule)
        d = derive(body, a, ctx)
        _no_gamma(d, rule)
        obligations = list(d.obligations)
        obligations.append(_loewner(b1, d.pre, "continue predicate below the derived body precondition"))
        cond = _meas_condition(lw, rw, side_only)
        obligations.append(_meas_obligation("measurement-judgment", cond, a, {0: post, 1: b1}, ctx, f"{cond} |= pre => {{exit, continue}}"))
        gamma: tuple = ()
        if side_only is None:
            gamma = (MeasLoopEq(lw, rw, ctx.untagged_decl(1) + ctx.untagged_decl(2)),)
        else:
            w = lw if lw is not None else rw
            obligations.append(_lossless(_tagged(w, 1 if lw is not None else 2), ctx, "loop lossless"))
        return Derived(a, post, gamma, obligations)

    return apply


def _fragments_of(parts: Sequence[RuleInstance]) -> tuple[Stmt, Stmt]:
    return seq(*[p.left for p in parts]), seq(*[p.right for p in parts])


def _rule_sc(strong: bool, rule: str):
    def apply(inst: RuleInstance, post: RegOp, ctx: Context) -> Derived:
        parts = inst.premises.get("parts")
        if not parts:
            raise RuleError(f"({rule}) needs a non-empty list of parts")
        left, right = _fragments_of(parts)
        if not (_is_skip(inst.left) and _is_skip(inst.right)) and (seq(inst.left) != left or seq(inst.right) != right):
            raise RuleError(f"({rule}) parts do not compose to the stated fragments")
        ctxs = [ctx]
        for p in parts[:-1]:
            ctxs.append(ctxs[-1].after(p.left, p.right))
        derived = [None] * len(parts)
        current = post
        for i in range(len(parts) - 1, -1, -1):
            derived[i] = derive(parts[i], current, ctxs[i])
            current = derived[i].pre
        obligations = [o for d in derived for o in d.obligations]
        if not strong:
            for d in derived:
                _no_gamma(d, rule)
            return Derived(current, post, (), obligations)
        for i in range(len(parts) - 1):
            nxt = derived[i + 1].gamma
            if nxt:
                obligations.append(entailment_obligation(derived[i].gamma, nxt, parts[i], ctxs[i]))
        return Derived(current, post, derived[0].gamma, obligations)

    return apply


def entailment_obligation(gamma: tuple, delta: tuple, part: RuleInstance, ctx: Context) -> Obligation:
    return Obligation(
        "couple-entailment",
        f"{{{', '.join(map(str, gamma))}}} entails {{{', '.join(map(str, delta))}}}",
        {"gamma": gamma, "delta": delta, "p1": ctx.program(1, seq(part.left)), "p2": ctx.program(2, seq(part.right))},
        "judgment-engine",
        empirical=True,
    )


# structural rules --------------------------------------------------------------------

def _inner(inst: RuleInstance, rule: str) -> RuleInstance:
    sub = inst.premises.get("inner")
    if sub is None:
        raise RuleError(f"({rule}) needs an inner premise")
    _check_fragment(sub, inst.left, inst.right, rule)
    return sub


def _rule_conseq(inst: RuleInstance, post: RegOp, ctx: Context) -> Derived:
    sub = _inner(inst, "Conseq")
    inner_post = inst.payload.get("inner_post", post)
    d = derive(sub, inner_post, ctx)
    obligations = list(d.obligations)
    pre = inst.payload.get("pre", d.pre)
    obligations.append(_loewner(pre, d.pre, "strengthened precondition"))
    if "inner_post" in inst.payload:
        obligations.append(_loewner(inner_post, post, "weakened postcondition"))
    return Derived(pre, post, d.gamma, obligations)


def _rule_weaken(inst: RuleInstance, post: RegOp, ctx: Context) -> Derived:
    d = derive(_inner(inst, "Weaken"), post, ctx)
    extra = tuple(c for c in inst.payload.get("gamma", ()) if c not in d.gamma)
    return Derived(d.pre, post, d.gamma + extra, d.obligations)


def _rule_case(inst: RuleInstance, post: RegOp, ctx: Context) -> Derived:
    cases = inst.premises.get("cases") or []
    probs = np.asarray(_payload(inst, "probs", "Case"), dtype=float)
    if len(cases) != len(probs) or not cases:
        raise RuleError("(Case) needs one probability per case")
    if np.any(probs < -1e-12) or abs(probs.sum() - 1.0) > 1e-10:
        raise RuleError("(Case) probabilities must form a distribution")
    total = np.zeros((total_dim(ctx.joint),) * 2, dtype=complex)
    gamma: tuple = ()
    obligations = []
    for p, sub in zip(probs, cases):
        _check_fragment(sub, inst.left, inst.right, "Case")
        d = derive(sub, post, ctx)
        if gamma and d.gamma and set(d.gamma) != set(gamma):
            raise RuleError("(Case) premises must share their side conditions")
        gamma = gamma or d.gamma
        obligations += d.obligations
        total += p * _full(d.pre, ctx.joint)
    return Derived(_op(total, ctx.joint), post, gamma, obligations)


def _fragment_vars(inst: RuleInstance) -> tuple[str, ...]:
    return tuple(tag_name(n, 1) for n in variables(inst.left)) + tuple(tag_name(n, 2) for n in variables(inst.right))


def _rule_frame(inst: RuleInstance, post: RegOp, ctx: Context) -> Derived:
    sub = _inner(inst, "Frame")
    c = _payload(inst, "frame", "Frame")
    b = _payload(inst, "inner_post", "Frame")
    frame_names = names(c.regs)
    var_names = _fragment_vars(inst)
    clash = set(frame_names) & set(var_names)
    if clash:
        raise RuleError(f"(Frame) framed registers {sorted(clash)} are used by the programs")
    if set(frame_names) & set(names(b.regs)):
        raise RuleError("(Frame) inner postcondition must not act on framed registers")
    after = ctx.after(inst.left, inst.right).joint
    claimed = _full(b, after) @ _full(c, after)
    if la.max_abs(claimed - _full(post, after)) > 1e-8:
        raise RuleError("(Frame) postcondition is not the inner postcondition tensored with the frame")
    d = derive(sub, b, ctx)
    inner = _full(d.pre, ctx.joint)
    frame = _full(c, ctx.joint)
    if la.max_abs(inner @ frame - frame @ inner) > 1e-8:
        raise RuleError("(Frame) inner precondition acts on the framed registers")
    ob = Obligation("separability", "framed registers disjoint from program variables", {"frame": frame_names, "vars": var_names}, "analytic")
    ob.status, ob.residual = "passed", 0.0
    cond = Separability((tuple(frame_names), tuple(n for n in names(ctx.joint) if n in set(var_names))))
    gamma = d.gamma + ((cond,) if cond not in d.gamma else ())
    return Derived(_op(inner @ frame, ctx.joint), post, gamma, d.obligations + [ob])


# registry ----------------------------------------------------------------------------

Transformer = Callable[[RuleInstance, RegOp, Context], Derived]

RULES: dict[str, Transformer] = {
    "Skip": _rule_skip,
    "Init": _rule_init("12", "Init"),
    "Init-L": _rule_init("1", "Init-L"),
    "Init-R": _rule_init("2", "Init-R"),
    "UT": _rule_ut("12", "UT"),
    "UT-L": _rule_ut("1", "UT-L"),
    "UT-R": _rule_ut("2", "UT-R"),
    "SO": _rule_so("12", "SO"),
    "SO-L": _rule_so("1", "SO-L"),
    "SO-R": _rule_so("2", "SO-R"),
    "SC": _rule_sc(False, "SC"),
    "SC+": _rule_sc(True, "SC+"),
    "IF": _rule_if_two(False, "IF"),
    "IF-w": _rule_if_two(True, "IF-w"),
    "IF-L": _rule_if_one(1, "IF-L"),
    "IF-R": _rule_if_one(2, "IF-R"),
    "IF1": _rule_if1(None, "IF1"),
    "IF1-L": _rule_if1(1, "IF1-L"),
    "IF1-R": _rule_if1(2, "IF1-R"),
    "LP": _rule_lp(None, "LP"),
    "LP-L": _rule_lp(1, "LP-L"),
    "LP-R": _rule_lp(2, "LP-R"),
    "LP1": _rule_lp1(None, "LP1"),
    "LP1-L": _rule_lp1(1, "LP1-L"),
    "LP1-R": _rule_lp1(2, "LP1-R"),
    "Conseq": _rule_conseq,
    "Weaken": _rule_weaken,
    "Case": _rule_case,
    "Frame": _rule_frame,
    # partial-correctness rules for a single program (run on side 1)
    "R.LP": _rule_lp(1, "R.LP", require_lossless=False),
}

QPD_RULES = {
    "Ax.Sk": "Skip",
    "Ax.Init": "Init-L",
    "Ax.UT": "UT-L",
    "R.SC": "SC",
    "R.IF": "IF-L",
    "R.LP": "R.LP",
    "R.Or": "Conseq",
}


def derive(inst: RuleInstance, post: RegOp, ctx: Optional[Context] = None) -> Derived:
    """Apply ``inst`` backwards to ``post``."""
    if inst.rule in PROJECTIVE_RULES:
        raise RuleError(f"({inst.rule}) is a projective rule; use derive_forward")
    if inst.rule in QPD_RULES and inst.rule != "R.LP":
        inst = RuleInstance(QPD_RULES[inst.rule], inst.left, inst.right, inst.premises, inst.payload)
    try:
        fn = RULES[inst.rule]
    except KeyError:
        raise RuleError(f"unknown rule {inst.rule!r}") from None
    ctx = ctx or infer_context(post, inst.left, inst.right)
    return fn(inst, post, ctx)


def precondition_of(inst: RuleInstance, post: RegOp, ctx: Optional[Context] = None) -> RegOp:
    """The precondition the rule assigns to ``post`` (premise obligations are not discharged)."""
    return derive(inst, post, ctx).pre


# projective rules (forward) -------------------------------------------------------------

def _proj(m: np.ndarray) -> np.ndarray:
    return la.support_projector(0.5 * (m + la.dag(m)))


def _fwd_skip(inst, pre, ctx):
    _expect_skip(inst.left, "Skip", "left")
    _expect_skip(inst.right, "Skip", "right")
    return Derived(pre, pre)


def _fwd_ut(sides: str, rule: str):
    def apply(inst, pre: RegOp, ctx: Context) -> Derived:
        mats, targets = [], ()
        for k, s in ((1, inst.left), (2, inst.right)):
            side = "left" if k == 1 else "right"
            if str(k) in sides:
                _expect_type(s, Unitary, rule, side)
                u, t = _unitary_of(s, k, ctx)
                mats.append(u)
                targets += t
            else:
                _expect_skip(s, rule, side)
        post = conjugate_local([la.tensor(*mats)], _full(pre, ctx.joint), ctx.joint, targets)
        return Derived(pre, _op(post, ctx.joint))

    return apply


def _fwd_init(sides: str, rule: str):
    def apply(inst, pre: RegOp, ctx: Context) -> Derived:
        targets, ds = _init_targets(inst, ctx, sides, rule)
        a = _full(pre, ctx.joint)
        rest = tuple(r for r in ctx.joint if r not in targets)
        red = reduce_to(a, ctx.joint, rest) if rest else np.array([[np.trace(a)]])
        zero = la.proj(la.tensor(*[la.ket(0, d) for d in ds]))
        post = RegOp(np.kron(zero, _proj(red)), targets + rest).reorder(ctx.joint)
        return Derived(pre, post)

    return apply


def _fwd_so(sides: str, rule: str):
    def apply(inst, pre: RegOp, ctx: Context) -> Derived:
        stmts, obligations = [], []
        for k, s in ((1, inst.left), (2, inst.right)):
            side = "left" if k == 1 else "right"
            if str(k) in sides:
                if not _basic_ok(s) or _is_skip(s):
                    raise RuleError(f"({rule}) expects a quantum operation on the {side}")
                stmts.append(_tagged(s, k))
                obligations.append(_lossless(_tagged(s, k), ctx, f"{side} operation is trace-preserving"))
            else:
                _expect_skip(s, rule, side)
                stmts.append(Skip())
        decl = ctx.decl_map
        op, lay = forward_basic(stmts[0], _full(pre, ctx.joint), ctx.joint, decl)
        op, lay = forward_basic(stmts[1], op, lay, decl)
        return Derived(pre, RegOp(_proj(op), lay), (), obligations)

    return apply


def _fwd_sc(inst, pre: RegOp, ctx: Context) -> Derived:
    parts = inst.premises.get("parts")
    if not parts:
        raise RuleError("(SC) needs a non-empty list of parts")
    current, obligations = pre, []
    for p in parts:
        d = derive_forward(p, current, ctx)
        obligations += d.obligations
        current = d.post
        ctx = ctx.after(p.left, p.right)
    return Derived(pre, current, (), obligations)


def _fwd_conseq(inst, pre: RegOp, ctx: Context) -> Derived:
    sub = _inner(inst, "Conseq")
    inner_pre = inst.payload.get("inner_pre", pre)
    d = derive_forward(sub, inner_pre, ctx)
    obligations = list(d.obligations)
    obligations.append(_loewner(pre, inner_pre, "strengthened precondition"))
    post = inst.payload.get("post", d.post)
    obligations.append(_loewner(d.post, post, "weakened postcondition"))
    return Derived(pre, post, (), obligations)


def _fwd_frame(inst, pre: RegOp, ctx: Context) -> Derived:
    sub = _inner(inst, "Frame")
    c = _payload(inst, "frame", "Frame")
    a = _payload(inst, "inner_pre", "Frame")
    clash = set(names(c.regs)) & set(_fragment_vars(inst))
    if clash:
        raise RuleError(f"(Frame) framed registers {sorted(clash)} are used by the programs")
    if la.max_abs(_full(a, ctx.joint) @ _full(c, ctx.joint) - _full(pre, ctx.joint)) > 1e-8:
        raise RuleError("(Frame) precondition is not the inner precondition tensored with the frame")
    d = derive_forward(sub, a, ctx)
    after = ctx.after(inst.left, inst.right).joint
    post = RegOp(_full(d.post, after) @ _full(c, after), after)
    return Derived(pre, post, (), d.obligations)


def _fwd_if(side_only: Optional[int], rule: str):
    def apply(inst, pre: RegOp, ctx: Context) -> Derived:
        l, r = inst.left, inst.right
        if side_only != 2:
            _expect_type(l, IfMeas, rule, "left")
        if side_only != 1:
            _expect_type(r, IfMeas, rule, "right")
        if side_only is None and l.meas.outcomes != r.meas.outcomes:
            raise RuleError(f"({rule}) needs matching outcome sets")
        outcomes = (l if side_only != 2 else r).meas.outcomes
        branch_pre = _payload(inst, "branch_pre", rule)
        after = ctx.after(l, r).joint
        obligations, posts = [], []
        for m in outcomes:
            sub = inst.premises.get(m)
            if sub is None:
                raise RuleError(f"({rule}) is missing the premise for outcome {m}")
            b1 = l.branch(m) if side_only != 2 else l
            b2 = r.branch(m) if side_only != 1 else r
            _check_fragment(sub, b1, b2, rule)
            d = derive_forward(sub, branch_pre[m], ctx)
            obligations += d.obligations
            posts.append(d.post)
        if "post" in inst.payload:
            post = inst.payload["post"]
        else:
            post = RegOp(_proj(sum(_full(p, after) for p in posts)), after)
        for m, p in zip(outcomes, posts):
            obligations.append(_loewner(p, post, f"branch {m} postcondition inside the conclusion"))
        cond = _meas_condition(l, r, side_only)
        obligations.append(_meas_obligation("projective-lifting", cond, pre, dict(branch_pre), ctx, f"{cond} |=_P pre => branch predicates"))
        return Derived(pre, post, (), obligations)

    return apply


def _fwd_lp(side_only: Optional[int], rule: str):
    def apply(inst, pre: RegOp, ctx: Context) -> Derived:
        l, r = inst.left, inst.right
        if side_only != 2:
            _expect_type(l, WhileMeas, rule, "left")
        else:
            _expect_skip(l, rule, "left")
        if side_only != 1:
            _expect_type(r, WhileMeas, rule, "right")
        else:
            _expect_skip(r, rule, "right")
        lw = l if side_only != 2 else None
        rw = r if side_only != 1 else None
        b0 = _payload(inst, "b0", rule)
        b1 = _payload(inst, "b1", rule)
        body = inst.premises.get("body")
        if body is None:
            raise RuleError(f"({rule}) needs the body premise")
        _check_fragment(body, lw.body if lw else Skip(), rw.body if rw else Skip(), rule)
        d = derive_forward(body, b1, ctx)
        obligations = list(d.obligations)
        obligations.append(_loewner(d.post, pre, "body maps the continue predicate back into the invariant"))
        cond = _meas_condition(lw, rw, side_only)
        obligations.append(_meas_obligation("projective-lifting", cond, pre, {0: b0, 1: b1}, ctx, f"{cond} |=_P pre => {{exit, continue}}"))
        if side_only is not None:
            w = lw if lw is not None else rw
            obligations.append(_lossless(_tagged(w, 1 if lw is not None else 2), ctx, "loop lossless"))
        return Derived(pre, b0, (), obligations)

    return apply


PROJECTIVE_RULES: dict[str, Transformer] = {
    "Skip-P": _fwd_skip,
    "UT-P": _fwd_ut("12", "UT-P"),
    "UT-P-L": _fwd_ut("1", "UT-P-L"),
    "UT-P-R": _fwd_ut("2", "UT-P-R"),
    "SC-P": _fwd_sc,
    "Conseq-P": _fwd_conseq,
    "Frame-P": _fwd_frame,
    "Init-P": _fwd_init("12", "Init-P"),
    "Init-P-L": _fwd_init("1", "Init-P-L"),
    "Init-P-R": _fwd_init("2", "Init-P-R"),
    "SO-P": _fwd_so("12", "SO-P"),
    "SO-P-L": _fwd_so("1", "SO-P-L"),
    "SO-P-R": _fwd_so("2", "SO-P-R"),
    "IF-P": _fwd_if(None, "IF-P"),
    "IF-P-L": _fwd_if(1, "IF-P-L"),
    "IF-P-R": _fwd_if(2, "IF-P-R"),
    "LP-P": _fwd_lp(None, "LP-P"),
    "LP-P-L": _fwd_lp(1, "LP-P-L"),
    "LP-P-R": _fwd_lp(2, "LP-P-R"),
}


def derive_forward(inst: RuleInstance, pre: RegOp, ctx: Optional[Context] = None) -> Derived:
    """Apply a projective rule forwards to the projector ``pre``."""
    try:
        fn = PROJECTIVE_RULES[inst.rule]
    except KeyError:
        raise RuleError(f"unknown projective rule {inst.rule!r}") from None
    ctx = ctx or infer_context(pre, inst.left, inst.right)
    return fn(inst, pre, ctx)


def postcondition_of(inst: RuleInstance, pre: RegOp, ctx: Optional[Context] = None) -> RegOp:
    return derive_forward(inst, pre, ctx).post


# single-program partial correctness ----------------------------------------------------

def qpd_derive(inst: RuleInstance, post: RegOp, regs: Sequence[Register]) -> Derived:
    """qPD rules on one program: predicates use untagged names of ``regs``."""
    ctx = Context.of(tuple(regs), ())
    tagged = RegOp(post.matrix, tuple(r.tagged(1) for r in post.regs))
    d = derive(_to_left(inst), tagged, ctx)
    return Derived(_untag(d.pre), post, (), d.obligations, d.notes)


def _untag(op: RegOp) -> RegOp:
    return RegOp(op.matrix, tuple(Register(untag_name(r.name), r.dim) for r in op.regs))


def _to_left(inst: RuleInstance) -> RuleInstance:
    if inst.rule not in QPD_RULES:
        raise RuleError(f"{inst.rule!r} is not a qPD rule")
    premises = {}
    for k, v in inst.premises.items():
        if isinstance(v, RuleInstance):
            premises[k] = _to_left(v)
        elif isinstance(v, (list, tuple)):
            premises[k] = [_to_left(x) for x in v]
        else:
            premises[k] = v
    payload = {k: (_tag_op(v) if isinstance(v, RegOp) else v) for k, v in inst.payload.items()}
    rule = QPD_RULES[inst.rule]
    return RuleInstance(rule, inst.left, Skip(), premises, payload)


def _tag_op(op: RegOp) -> RegOp:
    return RegOp(op.matrix, tuple(r if "<" in r.name else r.tagged(1) for r in op.regs))


def qpd_wp(inst: RuleInstance | Sequence[RuleInstance], post: RegOp, regs: Sequence[Register]) -> RegOp:
    """qPD precondition; analytic obligations (invariants, consequence) must hold or this raises."""
    if not isinstance(inst, RuleInstance):
        parts = list(inst)
        inst = parts[0] if len(parts) == 1 else RuleInstance("R.SC", seq(*[p.left for p in parts]), premises={"parts": parts})
    d = qpd_derive(inst, post, regs)
    for ob in d.obligations:
        if ob.kind == "loewner":
            gap = loewner_residual(ob.payload["lower"], ob.payload["upper"])
            if gap < -PREDICATE_TOL:
                raise RuleError(f"qPD obligation failed: {ob.description} (gap {gap:.3g})")
    return d.pre


def loewner_residual(lower: RegOp, upper: RegOp) -> float:
    """Smallest eigenvalue of ``upper - lower`` on their joint support."""
    regs = tuple(lower.regs) + tuple(r for r in upper.regs if r.name not in set(names(lower.regs)))
    return float(la.min_eig(upper.on(regs) - lower.on(regs)))
