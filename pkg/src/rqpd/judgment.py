"""Semantic checking of relational judgments and their side conditions.

A judgment relates two programs through a precondition on the joint input
space and a postcondition on the joint output space.  Validity quantifies
over every input, so the checks here are sound falsifiers backed by sampled
confidence: a reported violation is a genuine counterexample, a pass means
nothing was found among the inputs tried.

All register names on the joint spaces carry the side tags ``<1>``/``<2>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from . import coupling as cp
from . import linalg as la
from .lang.ast import Measurement, Program, WhileMeas, rename, tag_copy
from .semantics import LoopDivergenceError, is_lossless, loop_iterates, loop_registers, run
from .spaces import Register, RegOp, Regs, dims, embed, index_of, lookup, names, reduce_to, reduce_vector, reorder, tag_name, total_dim

FALSIFY_TOL = 1e-5
MEAS_TOL = 1e-8
PROJECTION_TOL = 1e-9
PROJECTION_STEPS = 2000
CERT_TOL = 1e-9
PUSHFORWARD_MAX_DIM = 256
DENSE_SAMPLING_MAX_DIM = 1024


def _tag(name: str, side: int) -> str:
    return name if "<" in name else tag_name(name, side)


# side conditions ---------------------------------------------------------------

@dataclass(frozen=True)
class MeasEq:
    """Equal outcome distributions of ``left`` on side 1 and ``right`` on side 2.

    Either measurement may be ``None``, meaning the trivial one-outcome
    measurement (the one-sided conditions).
    """

    left: Optional[Measurement]
    left_regs: tuple[str, ...]
    right: Optional[Measurement]
    right_regs: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "left_regs", tuple(_tag(n, 1) for n in self.left_regs))
        object.__setattr__(self, "right_regs", tuple(_tag(n, 2) for n in self.right_regs))
        if self.left is None and self.right is None:
            raise ValueError("at least one side must measure")
        if self.left is not None and self.right is not None and self.left.outcomes != self.right.outcomes:
            raise ValueError(f"outcome sets differ: {self.left.outcomes} vs {self.right.outcomes}")

    @property
    def outcomes(self) -> tuple[int, ...]:
        return (self.left or self.right).outcomes

    def effects(self, side: int) -> dict[int, np.ndarray]:
        m = self.left if side == 1 else self.right
        return {k: la.dag(op) @ op for k, op in m.ops.items()}

    def __str__(self) -> str:
        l = "I" if self.left is None else f"{self.left.name}[{','.join(self.left_regs)}]"
        r = "I" if self.right is None else f"{self.right.name}[{','.join(self.right_regs)}]"
        return f"{l} ~ {r}"


@dataclass(frozen=True)
class MeasLoopEq:
    """Equal exit distributions, iteration by iteration, of two loops.

    Loops are given with untagged register names; they are tagged here.
    """

    left: WhileMeas
    right: WhileMeas
    decl: tuple[Register, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "left", rename(self.left, lambda n: _tag(n, 1)))
        object.__setattr__(self, "right", rename(self.right, lambda n: _tag(n, 2)))

    def __str__(self) -> str:
        return f"loop {self.left.meas.name}[{','.join(self.left.regs)}] ~ loop {self.right.meas.name}[{','.join(self.right.regs)}]"


@dataclass(frozen=True)
class Separability:
    partition: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        blocks = tuple(tuple(b) for b in self.partition)
        object.__setattr__(self, "partition", blocks)
        flat = [n for b in blocks for n in b]
        if len(flat) != len(set(flat)):
            raise ValueError("partition blocks overlap")

    def blocks_for(self, regs: Sequence[Register]) -> list[Regs]:
        present = set(names(regs))
        missing = [n for b in self.partition for n in b if n not in present]
        if missing:
            raise ValueError(f"partition names {missing} are not in the state space {names(regs)}")
        out = [lookup(regs, b) for b in self.partition if b]
        covered = {n for b in self.partition for n in b}
        rest = tuple(r for r in regs if r.name not in covered)
        if rest:
            out.append(rest)
        return out

    def __str__(self) -> str:
        return "[" + ", ".join("{" + ",".join(b) + "}" for b in self.partition) + "]"


SideCondition = Union[MeasEq, MeasLoopEq, Separability]


# measurement conditions on a pair of states ----------------------------------------

def _expect(effect: np.ndarray, targets: Regs, rho: np.ndarray, regs: Regs) -> float:
    red = reduce_to(rho, regs, targets)
    return float(np.real(np.sum(effect * red.T)))


def meas_eq_residual(cond: MeasEq, rho1: np.ndarray, regs1: Regs, rho2: np.ndarray, regs2: Regs) -> float:
    """Largest difference between the two outcome probabilities."""
    worst = 0.0
    if cond.left is None or cond.right is None:
        side = 1 if cond.left is not None else 2
        rho, regs, mregs = (rho1, regs1, cond.left_regs) if side == 1 else (rho2, regs2, cond.right_regs)
        other = rho2 if side == 1 else rho1
        # a one-outcome measurement on the other side: the measured side only
        # needs the total mass to match, which holds for marginals of one state
        total = sum(_expect(e, lookup(regs, mregs), rho, regs) for e in cond.effects(side).values())
        return abs(total - float(np.real(np.trace(other))))
    for k in cond.outcomes:
        p1 = _expect(cond.effects(1)[k], lookup(regs1, cond.left_regs), rho1, regs1)
        p2 = _expect(cond.effects(2)[k], lookup(regs2, cond.right_regs), rho2, regs2)
        worst = max(worst, abs(p1 - p2))
    return worst


def loop_effects(loop: WhileMeas, local: Regs, count: int, decl: tuple[Register, ...] = ()) -> list[np.ndarray]:
    """Effects ``F_n`` with ``tr(F_n rho)`` the probability of leaving after exactly ``n`` iterations."""
    a0, a1, body = loop_iterates(loop, local, {r.name: r for r in decl})
    d = total_dim(local)
    step = la.dag(body @ a1)
    f = la.dag(a0) @ np.eye(d, dtype=complex).reshape(-1)
    out = []
    for _ in range(count):
        out.append(f.reshape(d, d))
        f = step @ f
    return out


def loop_bound(cond: MeasLoopEq, regs1: Regs, regs2: Regs) -> int:
    d1 = total_dim(loop_registers(cond.left, regs1))
    d2 = total_dim(loop_registers(cond.right, regs2))
    return d1 * d1 + d2 * d2 - 1


def _loop_probabilities(loop: WhileMeas, rho: np.ndarray, regs: Regs, count: int, decl) -> np.ndarray:
    local = loop_registers(loop, regs)
    red = reduce_to(rho, regs, local)
    return np.array([np.real(np.sum(f * red.T)) for f in loop_effects(loop, local, count, decl)])


def meas_loop_residual(cond: MeasLoopEq, rho1: np.ndarray, regs1: Regs, rho2: np.ndarray, regs2: Regs, count: Optional[int] = None) -> float:
    n = loop_bound(cond, regs1, regs2) + 1 if count is None else count
    p1 = _loop_probabilities(cond.left, rho1, regs1, n, cond.decl)
    p2 = _loop_probabilities(cond.right, rho2, regs2, n, cond.decl)
    return float(np.max(np.abs(p1 - p2), initial=0.0))


def _split(rho: np.ndarray, regs1: Regs, regs2: Regs) -> tuple[np.ndarray, np.ndarray]:
    joint = tuple(regs1) + tuple(regs2)
    if rho.ndim == 1:
        return reduce_vector(rho, joint, regs1), reduce_vector(rho, joint, regs2)
    return reduce_to(rho, joint, regs1), reduce_to(rho, joint, regs2)


def check_meas_eq(cond: MeasEq, rho: np.ndarray, regs1: Regs, regs2: Regs, tol: float = MEAS_TOL) -> bool:
    """Does the joint state ``rho`` (on ``regs1 + regs2``) satisfy the condition?"""
    r1, r2 = _split(np.asarray(rho, dtype=complex), tuple(regs1), tuple(regs2))
    return meas_eq_residual(cond, r1, tuple(regs1), r2, tuple(regs2)) <= tol


def check_meas_loop_eq(cond: MeasLoopEq, rho: np.ndarray, regs1: Regs, regs2: Regs, tol: float = MEAS_TOL, count: Optional[int] = None) -> bool:
    r1, r2 = _split(np.asarray(rho, dtype=complex), tuple(regs1), tuple(regs2))
    return meas_loop_residual(cond, r1, tuple(regs1), r2, tuple(regs2), count) <= tol


# separability ----------------------------------------------------------------------

def _is_product(rho: np.ndarray, regs: Regs, blocks: list[Regs], tol: float) -> bool:
    pieces = [reduce_to(rho, regs, b) for b in blocks]
    t = float(np.real(np.trace(rho)))
    if t <= 0:
        return True
    prod = la.tensor(*pieces) / t ** (len(pieces) - 1)
    order = tuple(r for b in blocks for r in b)
    return la.max_abs(reorder(prod, order, regs) - rho) <= tol


def check_separability(cond: Separability, rho: np.ndarray, regs: Regs, tol: float = 1e-9) -> str:
    """``yes``, ``no`` or ``relaxation-passed`` (PPT holds but is not conclusive)."""
    regs = tuple(regs)
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        rho = la.proj(rho)
    blocks = cond.blocks_for(regs)
    if len(blocks) <= 1 or _is_product(rho, regs, blocks, 1e-8):
        return "yes"
    w = la.eigvalsh(rho)
    pure = np.sum(w > 1e-9 * max(w[-1], 1e-300)) == 1
    if pure:
        # a pure state is separable exactly when it is a product
        return "no"
    for b in blocks:
        rest = tuple(r for r in regs if r not in b)
        order = tuple(b) + rest
        m = reorder(rho, regs, order)
        if cp.ppt_min_eig(m, (total_dim(b), total_dim(rest)), [1]) < -tol:
            return "no"
    if len(blocks) == 2 and total_dim(blocks[0]) * total_dim(blocks[1]) <= 6:
        return "yes"
    return "relaxation-passed"


# judgments ---------------------------------------------------------------------------

def _as_predicate(op: RegOp, space: Regs, what: str) -> RegOp:
    missing = set(names(op.regs)) - set(names(space))
    if missing:
        raise ValueError(f"{what} mentions registers {sorted(missing)} outside {names(space)}")
    if not la.is_hermitian(op.matrix, 1e-8):
        raise ValueError(f"{what} is not Hermitian")
    return op


@dataclass(eq=False)
class Judgment:
    """``gamma |= p1 ~ p2 : pre => post`` with untagged programs."""

    p1: Program
    p2: Program
    pre: RegOp
    post: RegOp
    gamma: tuple = ()

    def __post_init__(self):
        self.gamma = tuple(self.gamma)
        _as_predicate(self.pre, self.in_regs, "precondition")
        _as_predicate(self.post, self.out_regs, "postcondition")

    @cached_property
    def t1(self) -> Program:
        return tag_copy(self.p1, 1)

    @cached_property
    def t2(self) -> Program:
        return tag_copy(self.p2, 2)

    @property
    def in1(self) -> Regs:
        return self.t1.input_regs

    @property
    def in2(self) -> Regs:
        return self.t2.input_regs

    @property
    def in_regs(self) -> Regs:
        return self.in1 + self.in2

    @property
    def out1(self) -> Regs:
        return self.t1.output_regs

    @property
    def out2(self) -> Regs:
        return self.t2.output_regs

    @property
    def out_regs(self) -> Regs:
        return self.out1 + self.out2


@dataclass
class Verdict:
    status: str  # falsified | passed | inconclusive
    counterexample: Optional[np.ndarray] = None
    samples_used: int = 0
    worst_margin: float = float("inf")
    notes: list[str] = field(default_factory=list)
    approximate: bool = False
    counterexample_label: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "passed"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "exhaustive": False,
            "samples_used": self.samples_used,
            "worst_margin": _finite(self.worst_margin),
            "approximate_sampling": self.approximate,
            "counterexample": None if self.counterexample is None else la.to_json(self.counterexample),
            "counterexample_label": self.counterexample_label,
            "notes": list(self.notes),
        }


def _finite(x: float):
    if np.isfinite(x):
        return float(x)
    return str(x)


@dataclass
class MarginResult:
    margin: float
    pre_value: float
    best_value: float
    method: str  # product | pushforward | sdp | trace-mismatch
    out1: np.ndarray
    out2: np.ndarray
    witness: Optional[np.ndarray] = None
    solver_status: str = "optimal"


def _reduce_any(rho: np.ndarray, regs: Regs, keep: Regs) -> np.ndarray:
    return reduce_vector(rho, regs, keep) if rho.ndim == 1 else reduce_to(rho, regs, keep)


def _program_lossless(p: Program) -> bool:
    key = id(p)
    hit = _LOSSLESS_CACHE.get(key)
    if hit is None or hit[0] is not p:
        try:
            ok = bool(is_lossless(p))
        except LoopDivergenceError:
            ok = False
        hit = (p, ok)
        _LOSSLESS_CACHE[key] = hit
    return hit[1]


_LOSSLESS_CACHE: dict[int, tuple[Program, bool]] = {}


def _pushforward(j: Judgment, rho: np.ndarray) -> Optional[np.ndarray]:
    """``([[p1]] (x) [[p2]])(rho)`` on the joint output layout."""
    if total_dim(j.in_regs) > PUSHFORWARD_MAX_DIM:
        return None
    if not (_program_lossless(j.t1) and _program_lossless(j.t2)):
        return None
    mat = la.proj(rho) if rho.ndim == 1 else rho
    decl = {r.name: r for r in j.t1.registers + j.t2.registers}
    state, regs = run(j.t1.body, mat, j.in_regs, decl)
    state, regs = run(j.t2.body, state, regs, decl)
    if sorted(names(regs)) != sorted(names(j.out_regs)):
        return None
    return reorder(state, regs, j.out_regs)


def judgment_margin(j: Judgment, rho: np.ndarray, use_certificates: bool = True) -> MarginResult:
    """Best value of ``tr(B sigma) + tr(rho) - tr(sigma) - tr(A rho)`` over output couplings.

    ``rho`` is a joint input state (a vector for pure states) on ``j.in_regs``.
    A negative value means no coupling satisfies the defining inequality.
    """
    rho = np.asarray(rho, dtype=complex)
    r1 = _reduce_any(rho, j.in_regs, j.in1)
    r2 = _reduce_any(rho, j.in_regs, j.in2)
    pre_value = float(np.real(np.sum(j.pre.matrix * _reduce_any(rho, j.in_regs, j.pre.regs).T)))
    t_in = float(np.real(np.vdot(rho, rho))) if rho.ndim == 1 else float(np.real(np.trace(rho)))
    o1, _ = run(j.t1, r1)
    o2, _ = run(j.t2, r2)
    t1, t2 = float(np.real(np.trace(o1))), float(np.real(np.trace(o2)))
    if abs(t1 - t2) > cp.TRACE_TOL:
        return MarginResult(float("-inf"), pre_value, float("-inf"), "trace-mismatch", o1, o2, solver_status="infeasible")
    slack = t_in - t1 - pre_value
    b = j.post.on(j.out_regs)
    best, method, witness = float("-inf"), "none", None
    if use_certificates:
        if t1 > 1e-14:
            sigma = np.kron(o1, o2) / t1
        else:
            sigma = np.zeros_like(b)
        value = float(np.real(np.sum(b * sigma.T)))
        best, method, witness = value, "product", sigma
        if best + slack < -CERT_TOL:
            sigma = _pushforward(j, rho)
            if sigma is not None:
                value = float(np.real(np.sum(b * sigma.T)))
                if value > best:
                    best, method, witness = value, "pushforward", sigma
        if best + slack >= -CERT_TOL:
            return MarginResult(best + slack, pre_value, best, method, o1, o2, witness)
    sol = cp.max_coupling_value(cp.CouplingProblem(o1, o2, b))
    if not sol.ok:
        return MarginResult(float("nan"), pre_value, float("nan"), "sdp", o1, o2, None, sol.status)
    if sol.value > best:
        best, witness = sol.value, sol.witness
    return MarginResult(best + slack, pre_value, best, "sdp", o1, o2, witness, sol.status)


# sampling ----------------------------------------------------------------------------

@dataclass
class Sampler:
    count: int = 200
    seed: int = 0
    pure_only: bool = True
    battery: bool = True
    separable: bool = False
    fixtures: tuple = ()


def _rng(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng([seed, k])


def _constraint_ops(gamma: Sequence, in1: Regs, in2: Regs) -> list[np.ndarray]:
    joint = tuple(in1) + tuple(in2)
    ops = []
    for cond in gamma:
        if isinstance(cond, MeasEq):
            if cond.left is None or cond.right is None:
                continue
            e1, e2 = cond.effects(1), cond.effects(2)
            for k in cond.outcomes:
                a = embed(e1[k], lookup(joint, cond.left_regs), joint)
                b = embed(e2[k], lookup(joint, cond.right_regs), joint)
                ops.append(a - b)
        elif isinstance(cond, MeasLoopEq):
            loc1 = loop_registers(cond.left, in1)
            loc2 = loop_registers(cond.right, in2)
            n = total_dim(loc1) ** 2 + total_dim(loc2) ** 2
            f1 = loop_effects(cond.left, loc1, n, cond.decl)
            f2 = loop_effects(cond.right, loc2, n, cond.decl)
            for a, b in zip(f1, f2):
                ops.append(embed(a, loc1, joint) - embed(b, loc2, joint))
    return ops


class AffineSlice:
    """The trace-one states annihilated by a family of Hermitian constraints."""

    def __init__(self, ops: Sequence[np.ndarray], d: int):
        rows = [np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)] + [np.asarray(o, dtype=complex).reshape(-1) for o in ops]
        # orthonormal basis of the constraint span (real inner product Re<C, X>)
        real = np.concatenate([np.stack(rows).real, np.stack(rows).imag], axis=1)
        u, s, vt = np.linalg.svd(real, full_matrices=False)
        keep = s > 1e-10 * s[0]
        basis = vt[keep]
        self.basis = basis[:, : d * d] + 1j * basis[:, d * d :]
        coeffs = np.zeros(len(rows))
        coeffs[0] = 1.0 / np.sqrt(d)
        # target coordinates of the slice in the orthonormal basis
        self.target = (u[:, keep] / s[keep]).T @ coeffs
        self.d = d
        self.ops = [np.asarray(o, dtype=complex) for o in ops]

    def project(self, x: np.ndarray) -> np.ndarray:
        v = x.reshape(-1)
        coords = np.real(self.basis.conj() @ v)
        v = v - (coords - self.target) @ self.basis
        m = v.reshape(self.d, self.d)
        return 0.5 * (m + la.dag(m))

    def residual(self, x: np.ndarray) -> float:
        worst = abs(np.real(np.trace(x)) - 1.0)
        for c in self.ops:
            worst = max(worst, abs(float(np.real(np.sum(c * x.T)))))
        return worst

    def sample(self, start: np.ndarray, steps: int = PROJECTION_STEPS, tol: float = PROJECTION_TOL) -> Optional[np.ndarray]:
        x = start
        for _ in range(steps):
            x = la.clip_psd(self.project(x))
            if self.residual(x) <= tol:
                return x / np.real(np.trace(x))
        return None


def _battery(in1: Regs, in2: Regs) -> Iterator[tuple[str, np.ndarray]]:
    joint = tuple(in1) + tuple(in2)
    d = total_dim(joint)
    picks = range(d) if d <= 64 else sorted({0, d - 1} | set(np.random.default_rng(d).choice(d, 30, replace=False).tolist()))
    for i in picks:
        yield f"basis[{i}]", la.ket(int(i), d)
    if dims(in1) == dims(in2):
        d1 = total_dim(in1)
        yield "maximally-entangled", la.max_entangled(d1)
    yield "uniform", np.ones(d, dtype=complex) / np.sqrt(d)


def _product_state(blocks: list[Regs], joint: Regs, rng: np.random.Generator) -> np.ndarray:
    vec = np.ones(1, dtype=complex)
    order: Regs = ()
    for b in blocks:
        vec = np.kron(vec, la.haar_state(total_dim(b), rng))
        order = order + tuple(b)
    t = vec.reshape(dims(order))
    perm = [index_of(order, r.name) for r in joint]
    return t.transpose(perm).reshape(-1)


def _separability_conditions(gamma: Sequence) -> list[Separability]:
    return [c for c in gamma if isinstance(c, Separability)]


def sample_inputs(gamma: Sequence, in1: Regs, in2: Regs, sampler: Sampler) -> Iterator[tuple[str, np.ndarray, bool]]:
    """Yield ``(label, state, approximate)`` for joint states satisfying ``gamma``.

    States are vectors when pure and matrices otherwise.
    """
    joint = tuple(in1) + tuple(in2)
    d = total_dim(joint)
    ops = _constraint_ops(gamma, in1, in2)
    seps = _separability_conditions(gamma)
    if sampler.separable:
        seps = seps + [Separability((names(in1), names(in2)))]
    blocks = None
    if seps:
        # the finest partition that refines every requested one
        groups: dict[tuple, list[Register]] = {}
        for r in joint:
            key = tuple(next(i for i, b in enumerate(s.blocks_for(joint)) if r in b) for s in seps)
            groups.setdefault(key, []).append(r)
        blocks = [tuple(v) for v in groups.values()]
    slice_ = AffineSlice(ops, d) if ops else None
    if slice_ is not None and d > DENSE_SAMPLING_MAX_DIM:
        raise ValueError(f"constrained sampling on a {d}-dimensional space is not supported")

    def admissible(state: np.ndarray) -> bool:
        if slice_ is not None:
            m = la.proj(state) if state.ndim == 1 else state
            if slice_.residual(m / np.real(np.trace(m))) > PROJECTION_TOL:
                return False
        if blocks is not None:
            m = la.proj(state) if state.ndim == 1 else state
            if check_separability(Separability(tuple(names(b) for b in blocks)), m, joint) == "no":
                return False
        return True

    if sampler.battery:
        for label, s in _battery(in1, in2):
            if admissible(s):
                yield label, s, False
        for k, s in enumerate(sampler.fixtures):
            s = np.asarray(s, dtype=complex)
            if admissible(s):
                yield f"fixture[{k}]", s, False
    for k in range(sampler.count):
        rng = _rng(sampler.seed, k)
        if blocks is not None:
            start = _product_state(blocks, joint, rng)
        else:
            start = la.haar_state(d, rng)
        if slice_ is None:
            if not sampler.pure_only and k % 2 == 1:
                yield f"random[{k}]", la.random_density(d, rng, rank=2), False
            else:
                yield f"random[{k}]", start, False
            continue
        m = slice_.sample(la.proj(start))
        if m is None:
            continue
        if blocks is not None:
            if check_separability(Separability(tuple(names(b) for b in blocks)), m, joint) == "no":
                continue
            yield f"random[{k}]", m, True
        else:
            yield f"random[{k}]", m, False


# validity checks -----------------------------------------------------------------------

def _as_matrix(state: np.ndarray) -> np.ndarray:
    return la.proj(state) if state.ndim == 1 else state


def check_judgment(j: Judgment, sampler: Optional[Sampler] = None) -> Verdict:
    """Search for an input violating the judgment; see :func:`judgment_margin`."""
    sampler = sampler or Sampler()
    verdict = Verdict("passed")
    inconclusive = 0
    for label, state, approx in sample_inputs(j.gamma, j.in1, j.in2, sampler):
        verdict.approximate |= approx
        try:
            res = judgment_margin(j, state)
        except LoopDivergenceError as exc:
            return Verdict("inconclusive", samples_used=verdict.samples_used, notes=[str(exc)])
        verdict.samples_used += 1
        if np.isnan(res.margin):
            inconclusive += 1
            continue
        verdict.worst_margin = min(verdict.worst_margin, res.margin)
        if res.margin < -FALSIFY_TOL:
            verdict.status = "falsified"
            verdict.counterexample = _as_matrix(state)
            verdict.counterexample_label = label
            if res.method == "trace-mismatch":
                verdict.notes.append("output traces differ, so no coupling exists")
            return verdict
    if inconclusive:
        verdict.status = "inconclusive"
        verdict.notes.append(f"{inconclusive} samples had no reliable solver answer")
    if verdict.samples_used == 0:
        verdict.status = "inconclusive"
        verdict.notes.append("no admissible input was sampled")
    if verdict.approximate:
        verdict.notes.append("inputs drawn from a PPT relaxation of the separable set")
    return verdict


def check_projective_judgment(p1: Program, p2: Program, pre: RegOp, post: RegOp, sampler: Optional[Sampler] = None) -> Verdict:
    """Projective validity: every witness state in ``pre`` yields outputs with a lifting of ``post``."""
    sampler = sampler or Sampler()
    if not la.is_projector(pre.matrix) or not la.is_projector(post.matrix):
        raise ValueError("projective judgments need projector pre- and postconditions")
    j = Judgment(p1, p2, pre, post)
    a = pre.on(j.in_regs)
    b = post.on(j.out_regs)
    w, v = la.eigh(a)
    rng_vectors = v[:, w > 0.5]
    verdict = Verdict("passed", worst_margin=0.0)
    if rng_vectors.shape[1] == 0:
        verdict.notes.append("precondition is zero; vacuously valid")
        return verdict
    d = a.shape[0]

    def witnesses():
        if sampler.battery:
            for i in range(rng_vectors.shape[1]):
                yield f"range[{i}]", rng_vectors[:, i]
        for k in range(sampler.count):
            g = a @ la.haar_state(d, _rng(sampler.seed, k))
            norm = np.linalg.norm(g)
            if norm > 1e-12:
                yield f"random[{k}]", g / norm

    inconclusive = 0
    for label, psi in witnesses():
        r1 = reduce_vector(psi, j.in_regs, j.in1)
        r2 = reduce_vector(psi, j.in_regs, j.in2)
        o1, _ = run(j.t1, r1)
        o2, _ = run(j.t2, r2)
        sol = cp.lifting_exists(o1, o2, b)
        verdict.samples_used += 1
        if sol.status == "numerical-failure":
            inconclusive += 1
            continue
        gap = sol.residuals.get("lifting_gap", float("inf"))
        verdict.worst_margin = min(verdict.worst_margin, -gap if np.isfinite(gap) else float("-inf"))
        if not sol.ok:
            verdict.status = "falsified"
            verdict.counterexample = la.proj(psi)
            verdict.counterexample_label = label
            return verdict
    if inconclusive:
        verdict.status = "inconclusive"
        verdict.notes.append(f"{inconclusive} lifting problems had no reliable solver answer")
    return verdict


def _condition_residual(cond, o1: np.ndarray, regs1: Regs, o2: np.ndarray, regs2: Regs) -> float:
    if isinstance(cond, MeasEq):
        return meas_eq_residual(cond, o1, regs1, o2, regs2)
    if isinstance(cond, MeasLoopEq):
        return meas_loop_residual(cond, o1, regs1, o2, regs2)
    raise TypeError(f"unsupported condition {cond!r}")


def check_couple_entailment(gamma: Sequence, delta: Sequence, p1: Program, p2: Program, sampler: Optional[Sampler] = None) -> Verdict:
    """Do the output marginals satisfy ``delta`` whenever the input satisfies ``gamma``?

    Measurement conditions depend only on the two marginals, so every output
    coupling satisfies them exactly when the marginal pair does.
    """
    sampler = sampler or Sampler()
    if any(isinstance(c, Separability) for c in delta):
        return Verdict("inconclusive", notes=["unsupported: separability conditions cannot be entailed through marginals"])
    t1, t2 = tag_copy(p1, 1), tag_copy(p2, 2)
    verdict = Verdict("passed", worst_margin=0.0)
    if not delta:
        verdict.notes.append("empty consequent")
        return verdict
    for label, state, approx in sample_inputs(gamma, t1.input_regs, t2.input_regs, sampler):
        verdict.approximate |= approx
        r1 = _reduce_any(state, t1.input_regs + t2.input_regs, t1.input_regs)
        r2 = _reduce_any(state, t1.input_regs + t2.input_regs, t2.input_regs)
        o1, regs1 = run(t1, r1)
        o2, regs2 = run(t2, r2)
        verdict.samples_used += 1
        worst = max(_condition_residual(c, o1, regs1, o2, regs2) for c in delta)
        verdict.worst_margin = min(verdict.worst_margin, -worst)
        if worst > FALSIFY_TOL:
            verdict.status = "falsified"
            verdict.counterexample = _as_matrix(state)
            verdict.counterexample_label = label
            return verdict
    if verdict.samples_used == 0:
        verdict.status = "inconclusive"
        verdict.notes.append("no admissible input was sampled")
    return verdict


# measurement judgments -------------------------------------------------------------

@dataclass
class MeasJudgmentResult:
    status: str  # holds | fails | precondition-violated | numerical-failure
    lhs: float
    rhs: float
    witnesses: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.status == "holds"


def _post_measurement(meas: Measurement, mregs: tuple[str, ...], rho: np.ndarray, regs: Regs) -> dict[int, np.ndarray]:
    from .spaces import conjugate_local

    targets = lookup(regs, mregs)
    return {k: conjugate_local([op], rho, regs, targets) for k, op in meas.ops.items()}


def _swap_sides(op: np.ndarray, d1: int, d2: int) -> np.ndarray:
    return la.permute(op, (d1, d2), [1, 0])


def _meas_parts(cond: MeasEq, rho: np.ndarray, regs1: Regs, regs2: Regs):
    joint = tuple(regs1) + tuple(regs2)
    rho = _as_matrix(np.asarray(rho, dtype=complex))
    r1, r2 = reduce_to(rho, joint, regs1), reduce_to(rho, joint, regs2)
    return rho, r1, r2


def _posts_on(posts: dict, joint: Regs) -> dict[int, np.ndarray]:
    return {k: (b.on(joint) if isinstance(b, RegOp) else np.asarray(b, dtype=complex)) for k, b in posts.items()}


def _one_sided_value(cond: MeasEq, r1, regs1, r2, regs2, objectives: dict[int, np.ndarray]):
    d1, d2 = total_dim(regs1), total_dim(regs2)
    keys = list(cond.outcomes)
    if cond.left is not None:
        parts = _post_measurement(cond.left, cond.left_regs, r1, regs1)
        sol = cp.max_split_coupling_value([parts[k] for k in keys], r2, [objectives[k] for k in keys])
        wit = sol.witnesses
    else:
        parts = _post_measurement(cond.right, cond.right_regs, r2, regs2)
        objs = [_swap_sides(objectives[k], d1, d2) for k in keys]
        sol = cp.max_split_coupling_value([parts[k] for k in keys], r1, objs)
        wit = None if sol.witnesses is None else [_swap_sides(w, d2, d1) for w in sol.witnesses]
    return sol, ({} if wit is None else dict(zip(keys, wit)))


def check_meas_judgment(cond: MeasEq, pre: RegOp, posts: dict, rho: np.ndarray, regs1: Regs, regs2: Regs, tol: float = 1e-6) -> MeasJudgmentResult:
    """``cond |= pre => {posts[m]}`` at the joint state ``rho`` on ``regs1 + regs2``.

    Two-sided conditions optimize one coupling per outcome; one-sided ones
    solve a single joint program that splits the unmeasured side.
    """
    regs1, regs2 = tuple(regs1), tuple(regs2)
    joint = regs1 + regs2
    rho, r1, r2 = _meas_parts(cond, rho, regs1, regs2)
    lhs = pre.expect(rho, joint)
    objectives = _posts_on(posts, joint)
    if cond.left is not None and cond.right is not None:
        if meas_eq_residual(cond, r1, regs1, r2, regs2) > MEAS_TOL:
            return MeasJudgmentResult("precondition-violated", lhs, float("nan"))
        parts1 = _post_measurement(cond.left, cond.left_regs, r1, regs1)
        parts2 = _post_measurement(cond.right, cond.right_regs, r2, regs2)
        total, wit = 0.0, {}
        for k in cond.outcomes:
            sol = cp.max_coupling_value(cp.CouplingProblem(parts1[k], parts2[k], objectives[k]))
            if not sol.ok:
                return MeasJudgmentResult("numerical-failure", lhs, float("nan"), wit)
            total += sol.value
            wit[k] = sol.witness
        return MeasJudgmentResult("holds" if lhs <= total + tol else "fails", lhs, total, wit)
    sol, wit = _one_sided_value(cond, r1, regs1, r2, regs2, objectives)
    if sol.status == "numerical-failure":
        return MeasJudgmentResult("numerical-failure", lhs, float("nan"))
    return MeasJudgmentResult("holds" if lhs <= sol.value + tol else "fails", lhs, sol.value, wit)


def check_projective_meas_judgment(cond: MeasEq, pre: RegOp, posts: dict, rho: np.ndarray, regs1: Regs, regs2: Regs, tol: float = 1e-6) -> MeasJudgmentResult:
    """Projective form: ``rho`` is a witness inside ``pre``; each outcome pair needs a lifting of ``posts[m]``."""
    regs1, regs2 = tuple(regs1), tuple(regs2)
    joint = regs1 + regs2
    rho, r1, r2 = _meas_parts(cond, rho, regs1, regs2)
    a = pre.on(joint)
    inside = la.max_abs(a @ rho @ a - rho)
    if inside > 1e-7:
        return MeasJudgmentResult("precondition-violated", inside, float("nan"))
    objectives = _posts_on(posts, joint)
    t = float(np.real(np.trace(rho)))
    if cond.left is not None and cond.right is not None:
        if meas_eq_residual(cond, r1, regs1, r2, regs2) > MEAS_TOL:
            return MeasJudgmentResult("precondition-violated", t, float("nan"))
        parts1 = _post_measurement(cond.left, cond.left_regs, r1, regs1)
        parts2 = _post_measurement(cond.right, cond.right_regs, r2, regs2)
        total, wit = 0.0, {}
        for k in cond.outcomes:
            sol = cp.lifting_exists(parts1[k], parts2[k], objectives[k], tol)
            if sol.status == "numerical-failure":
                return MeasJudgmentResult("numerical-failure", t, float("nan"), wit)
            if not sol.ok:
                return MeasJudgmentResult("fails", t, float("nan"), wit)
            total += sol.value
            wit[k] = sol.witness
        return MeasJudgmentResult("holds", t, total, wit)
    sol, wit = _one_sided_value(cond, r1, regs1, r2, regs2, objectives)
    if sol.status == "numerical-failure":
        return MeasJudgmentResult("numerical-failure", t, float("nan"))
    return MeasJudgmentResult("holds" if sol.value >= t - tol else "fails", t, sol.value, wit)
