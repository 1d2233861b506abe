"""Input constraints under which two programs branch identically.

Walking backwards over aligned ``if``/``while`` pairs, every constraint is a
pair ``(A, B)`` of Hermitian operators demanding ``tr(A rho1) = tr(B rho2)``.
Straight-line statements between the branching points act on their own side
through their dual.  Redundant pairs are pruned against the span of those
already kept, so the set stays at most ``d1^2 + d2^2`` long.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import linalg as la
from .lang.ast import IfMeas, Program, Seq, Skip, Stmt, WhileMeas
from .semantics import flow, outcome_profile, run_dual
from .spaces import Regs, embed, lookup, total_dim

DEDUP_TOL = 1e-10
CHECK_TOL = 1e-8
ZERO_TOL = 1e-12


class ComparabilityError(ValueError):
    """The two programs do not have the aligned shape the collection needs."""


@dataclass
class ConstraintSet:
    regs1: Regs
    regs2: Regs
    pairs: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    def residuals(self, rho1: np.ndarray, rho2: np.ndarray) -> np.ndarray:
        rho1, rho2 = _as_density(rho1), _as_density(rho2)
        return np.array([abs(np.trace(a @ rho1) - np.trace(b @ rho2)) for a, b in self.pairs])

    def to_dict(self) -> dict:
        return {
            "regs1": [[r.name, r.dim] for r in self.regs1],
            "regs2": [[r.name, r.dim] for r in self.regs2],
            "pairs": [[la.to_json(a), la.to_json(b)] for a, b in self.pairs],
        }


def _as_density(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    return la.proj(x) if x.ndim == 1 else x


def _flatten(s: Stmt) -> list[Stmt]:
    if isinstance(s, Seq):
        return [t for u in s.stmts for t in _flatten(u)]
    if isinstance(s, Skip):
        return []
    return [s]


def _branching(s: Stmt) -> bool:
    return isinstance(s, (IfMeas, WhileMeas))


@dataclass
class _Segment:
    """One branching statement followed by the straight-line code up to the next one."""

    stmt: Optional[Stmt]
    before: Regs
    tail: list[Stmt]
    tail_before: Regs


def _segments(p: Program) -> list[_Segment]:
    decl = {r.name: r for r in p.registers}
    stmts = _flatten(p.body)
    layout = p.input_regs
    segs = [_Segment(None, layout, [], layout)]
    for s in stmts:
        if _branching(s):
            after = flow(s, layout, decl)
            segs.append(_Segment(s, layout, [], after))
        else:
            segs[-1].tail.append(s)
        layout = flow(s, layout, decl)
    return segs


def _dual_seq(stmts: list[Stmt], ops: list[np.ndarray], before: Regs, decl) -> list[np.ndarray]:
    if not stmts:
        return ops
    body = Seq(tuple(stmts))
    return [run_dual(body, a, before, decl)[0] for a in ops]


def _conj(m: np.ndarray, x: np.ndarray, targets: Regs, layout: Regs) -> np.ndarray:
    full = embed(m, targets, layout)
    return la.dag(full) @ x @ full


class _Pruner:
    """Keeps pairs whose joint vector is not within ``tol`` of the span of earlier ones."""

    def __init__(self, tol: float = DEDUP_TOL):
        self.tol = tol
        self.basis: list[np.ndarray] = []
        self.kept: list[tuple[np.ndarray, np.ndarray]] = []

    def add(self, a: np.ndarray, b: np.ndarray) -> None:
        a, b = 0.5 * (a + la.dag(a)), 0.5 * (b + la.dag(b))
        v = np.concatenate([a.reshape(-1), b.reshape(-1)])
        norm = np.linalg.norm(v)
        if norm < ZERO_TOL:
            return
        v = v / norm
        r = v.copy()
        for _ in range(2):  # re-orthogonalize once for stability
            for u in self.basis:
                r = r - np.real(np.vdot(u, r)) * u
        rn = np.linalg.norm(r)
        if rn <= self.tol:
            return
        self.basis.append(r / rn)
        self.kept.append((a / norm, b / norm))


def loop_bound(d1: int, d2: int, rule: str = "algorithm") -> int:
    """Largest power ``j`` used for loop constraints."""
    if rule == "algorithm":
        return d1 * d1 + d2 * d2 + 1
    if rule == "tight":
        return d1 * d1 + d2 * d2 - 1
    raise ValueError(f"unknown bound rule {rule!r}")


def collect_constraints(p1: Program, p2: Program, bound: Union[str, int] = "algorithm", dedup: bool = True) -> ConstraintSet:
    segs1, segs2 = _segments(p1), _segments(p2)
    if len(segs1) != len(segs2):
        raise ComparabilityError(f"programs have {len(segs1) - 1} and {len(segs2) - 1} branching statements")
    for k, (s1, s2) in enumerate(zip(segs1[1:], segs2[1:])):
        if type(s1.stmt) is not type(s2.stmt):
            raise ComparabilityError(f"branching statement {k} is {type(s1.stmt).__name__} vs {type(s2.stmt).__name__}")
        if isinstance(s1.stmt, IfMeas) and s1.stmt.meas.outcomes != s2.stmt.meas.outcomes:
            raise ComparabilityError(f"branching statement {k} has different outcome sets")
    decl1 = {r.name: r for r in p1.registers}
    decl2 = {r.name: r for r in p2.registers}
    natural1 = flow(p1.body, p1.input_regs, decl1)
    natural2 = flow(p2.body, p2.input_regs, decl2)
    pairs = [(np.eye(total_dim(natural1), dtype=complex), np.eye(total_dim(natural2), dtype=complex))]

    for s1, s2 in zip(reversed(segs1), reversed(segs2)):
        lefts = _dual_seq(s1.tail, [a for a, _ in pairs], s1.tail_before, decl1)
        rights = _dual_seq(s2.tail, [b for _, b in pairs], s2.tail_before, decl2)
        pairs = list(zip(lefts, rights))
        if s1.stmt is None:
            break
        if isinstance(s1.stmt, IfMeas):
            pairs = _if_step(s1, s2, pairs, decl1, decl2)
        else:
            pairs = _while_step(s1, s2, pairs, decl1, decl2, bound)
        if dedup:
            pairs = _prune(pairs)
    if dedup:
        pairs = _prune(pairs)
    return ConstraintSet(p1.input_regs, p2.input_regs, pairs)


def _prune(pairs):
    pr = _Pruner()
    for a, b in pairs:
        pr.add(a, b)
    return pr.kept


def _if_step(s1: _Segment, s2: _Segment, pairs, decl1, decl2):
    i1, i2 = s1.stmt, s2.stmt
    t1, t2 = lookup(s1.before, i1.regs), lookup(s2.before, i2.regs)
    out = []
    for m in i1.meas.outcomes:
        m1, m2 = i1.meas[m], i2.meas[m]
        out.append((_conj(m1, np.eye(total_dim(s1.before)), t1, s1.before), _conj(m2, np.eye(total_dim(s2.before)), t2, s2.before)))
        for a, b in pairs:
            pa = run_dual(i1.branch(m), a, s1.before, decl1)[0]
            pb = run_dual(i2.branch(m), b, s2.before, decl2)[0]
            out.append((_conj(m1, pa, t1, s1.before), _conj(m2, pb, t2, s2.before)))
    return out


def _while_step(s1: _Segment, s2: _Segment, pairs, decl1, decl2, bound):
    w1, w2 = s1.stmt, s2.stmt
    lay1, lay2 = s1.before, s2.before
    t1, t2 = lookup(lay1, w1.regs), lookup(lay2, w2.regs)
    d1, d2 = total_dim(lay1), total_dim(lay2)
    top = bound if isinstance(bound, int) else loop_bound(d1, d2, bound)

    def step1(x):
        return _conj(w1.meas[1], run_dual(w1.body, x, lay1, decl1)[0], t1, lay1)

    def step2(x):
        return _conj(w2.meas[1], run_dual(w2.body, x, lay2, decl2)[0], t2, lay2)

    seeds = [(np.eye(d1, dtype=complex), np.eye(d2, dtype=complex))] + list(pairs)
    current = [(_conj(w1.meas[0], a, t1, lay1), _conj(w2.meas[0], b, t2, lay2)) for a, b in seeds]
    out = []
    for j in range(top + 1):
        out.extend(current)
        if j < top:
            current = [(step1(a), step2(b)) for a, b in current]
    return out


def check_comparability(c: ConstraintSet, rho1: np.ndarray, rho2: np.ndarray, tol: float = CHECK_TOL) -> bool:
    return bool(np.all(c.residuals(rho1, rho2) <= tol))


def sample_comparable(c: ConstraintSet, rng: np.random.Generator, steps: int = 4000) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """A random pair of unit-trace states satisfying every constraint (``None`` if projection stalls)."""
    from .judgment import AffineSlice

    d1, d2 = total_dim(c.regs1), total_dim(c.regs2)
    z12 = np.zeros((d1, d2))

    def block(a, b):
        return np.block([[a, z12], [z12.T, -b]])

    ops = [block(np.eye(d1), np.eye(d2))] + [block(a, b) for a, b in c.pairs]
    slice_ = AffineSlice(ops, d1 + d2)
    start = np.block([[la.proj(la.haar_state(d1, rng)), z12], [z12.T, la.proj(la.haar_state(d2, rng))]]) / 2
    x = slice_.sample(start, steps=steps, tol=1e-12)
    if x is None:
        return None
    return 2 * x[:d1, :d1], 2 * x[d1:, d1:]


def profile_gap(p1: Program, p2: Program, rho1: np.ndarray, rho2: np.ndarray, max_events: int = 8) -> float:
    """Largest difference between the outcome-sequence weights of the two runs."""
    a = outcome_profile(p1.body, _as_density(rho1), p1.input_regs, max_events, {r.name: r for r in p1.registers})
    b = outcome_profile(p2.body, _as_density(rho2), p2.input_regs, max_events, {r.name: r for r in p2.registers})
    return max((abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b)), default=0.0)
