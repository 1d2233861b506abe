"""Operational and denotational semantics of quantum while-programs.

States are partial density operators paired with the register tuple that
fixes their tensor layout.  ``run`` evaluates a statement directly on such a
state (with optional leading batch axes), ``denote`` turns a program into an
explicit superoperator, and ``step``/``expand`` give the small-step
transition system together with its probabilistic branching tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Optional, Sequence

import numpy as np

from . import linalg as la
from .lang.ast import (
    ApplySuper,
    IfMeas,
    Init,
    Program,
    Seq,
    Skip,
    Stmt,
    TraceOut,
    Unitary,
    WhileMeas,
    variables,
    walk,
)
from .spaces import Register, Regs, conjugate_local, dims, lookup, names, reorder, total_dim, trace_out


@dataclass
class LoopConfig:
    spectral_margin: float = 1e-6
    series_tol: float = 1e-10
    max_iterations: int = 100_000


LOOP = LoopConfig()


class LoopDivergenceError(ArithmeticError):
    """The loop series did not converge within the iteration cap."""

    def __init__(self, stmt: WhileMeas, spectral_radius: float, increment: float, iterations: int):
        super().__init__(
            f"loop over {stmt.meas.name}[{','.join(stmt.regs)}] did not converge: "
            f"spectral radius {spectral_radius:.6g}, last increment {increment:.3e} after {iterations} steps"
        )
        self.spectral_radius = spectral_radius
        self.increment = increment
        self.iterations = iterations


def init_kraus(dim: int) -> list[np.ndarray]:
    return [np.outer(la.ket(0, dim), la.ket(i, dim)) for i in range(dim)]


# register flow -----------------------------------------------------------

def flow(s: Stmt, live: Regs, decl: dict[str, Register] | None = None) -> Regs:
    """Registers present after ``s`` when started on ``live`` (no validation)."""
    if isinstance(s, Seq):
        for t in s.stmts:
            live = flow(t, live, decl)
        return live
    if isinstance(s, TraceOut):
        return tuple(r for r in live if r.name != s.reg)
    if isinstance(s, IfMeas):
        return flow(s.branches[0][1], live, decl)
    if isinstance(s, ApplySuper):
        if set(s.ins) == set(s.outs):
            return live
        rest = tuple(r for r in live if r.name not in set(s.ins))
        return rest + _out_regs(s, live, decl)
    return live


def _out_regs(s: ApplySuper, live: Regs, decl: dict[str, Register] | None) -> Regs:
    pool = dict(decl or {})
    pool.update({r.name: r for r in live})
    try:
        return tuple(pool[n] for n in s.outs)
    except KeyError as exc:
        raise ValueError(f"register {exc.args[0]} is unknown; pass the declared registers") from None


# direct evaluation ----------------------------------------------------------

def run(
    p: Program | Stmt,
    rho: np.ndarray,
    regs: Sequence[Register] | None = None,
    decl: dict[str, Register] | None = None,
) -> tuple[np.ndarray, Regs]:
    """Evaluate ``p`` on ``rho`` (laid out on ``regs``); returns the output and its layout.

    For a :class:`Program` the default layout is its input registers and the
    result is returned on its output registers in their canonical order.
    """
    if isinstance(p, Program):
        regs = p.input_regs if regs is None else tuple(regs)
        decl = {r.name: r for r in p.registers} | (decl or {})
        out, out_regs = _run(p.body, np.asarray(rho, dtype=complex), tuple(regs), decl)
        target = p.output_regs
        if sorted(names(target)) == sorted(names(out_regs)):
            out = _reorder_batch(out, out_regs, target)
            out_regs = target
        return out, out_regs
    if regs is None:
        raise ValueError("a register layout is required for a bare statement")
    return _run(p, np.asarray(rho, dtype=complex), tuple(regs), decl or {})


def _reorder_batch(rho: np.ndarray, regs: Regs, new_regs: Regs) -> np.ndarray:
    if names(regs) == names(new_regs):
        return rho
    if rho.ndim == 2:
        return reorder(rho, regs, new_regs)
    return np.stack([reorder(r, regs, new_regs) for r in rho.reshape((-1,) + rho.shape[-2:])]).reshape(
        rho.shape[:-2] + rho.shape[-2:]
    )


def _run(s: Stmt, rho: np.ndarray, regs: Regs, decl: dict[str, Register]) -> tuple[np.ndarray, Regs]:
    if isinstance(s, Skip):
        return rho, regs
    if isinstance(s, Seq):
        for t in s.stmts:
            rho, regs = _run(t, rho, regs, decl)
        return rho, regs
    if isinstance(s, Init):
        target = lookup(regs, [s.reg])
        return conjugate_local(init_kraus(target[0].dim), rho, regs, target), regs
    if isinstance(s, Unitary):
        return conjugate_local([s.gate.matrix], rho, regs, lookup(regs, s.regs)), regs
    if isinstance(s, TraceOut):
        return trace_out(rho, regs, lookup(regs, [s.reg]))
    if isinstance(s, ApplySuper):
        ins = lookup(regs, s.ins)
        outs = _out_regs(s, regs, decl)
        new = flow(s, regs, decl)
        return conjugate_local(s.channel.kraus, rho, regs, ins, outs, new), new
    if isinstance(s, IfMeas):
        target = lookup(regs, s.regs)
        total = None
        out_regs: Regs | None = None
        for k, branch in s.branches:
            part = conjugate_local([s.meas[k]], rho, regs, target)
            res, r_regs = _run(branch, part, regs, decl)
            if out_regs is None:
                total, out_regs = res, r_regs
            else:
                total = total + _reorder_batch(res, r_regs, out_regs)
        return total, out_regs
    if isinstance(s, WhileMeas):
        local = loop_registers(s, regs)
        kraus = loop_kraus(s, local, _freeze_decl(decl))
        return conjugate_local(kraus, rho, regs, local), regs
    raise TypeError(f"not a statement: {s!r}")


def _freeze_decl(decl: dict[str, Register]) -> tuple[Register, ...]:
    return tuple(sorted(decl.values(), key=lambda r: r.name))


def loop_registers(s: WhileMeas, regs: Regs) -> Regs:
    """Registers a loop touches, in the order they appear in ``regs``."""
    used = set(s.regs) | set(variables(s.body))
    return tuple(r for r in regs if r.name in used)


# superoperator matrices ---------------------------------------------------

def statement_matrix(s: Stmt, regs: Regs, decl: dict[str, Register] | None = None, chunk: int = 1024) -> tuple[np.ndarray, Regs]:
    """Matrix ``A`` with ``A vec(rho) = vec([[s]](rho))`` by probing matrix units."""
    d = total_dim(regs)
    cols = []
    out_regs: Regs = regs
    for start in range(0, d * d, chunk):
        idx = np.arange(start, min(d * d, start + chunk))
        batch = np.zeros((len(idx), d, d), dtype=complex)
        batch[np.arange(len(idx)), idx // d, idx % d] = 1.0
        out, out_regs = _run(s, batch, regs, decl or {})
        cols.append(out.reshape(len(idx), -1))
    return np.concatenate(cols, axis=0).T, out_regs


@dataclass(frozen=True)
class LoopSolution:
    matrix: np.ndarray
    spectral_radius: float
    method: str
    iterations: int


def _loop_matrix(s: WhileMeas, local: Regs, decl: tuple[Register, ...]) -> LoopSolution:
    d = total_dim(local)
    meas_regs = lookup(local, s.regs)
    m0 = _embed_local(s.meas[0], meas_regs, local)
    m1 = _embed_local(s.meas[1], meas_regs, local)
    a0 = la.superop_matrix([m0])
    a1 = la.superop_matrix([m1])
    body, body_regs = statement_matrix(s.body, local, {r.name: r for r in decl})
    if names(body_regs) != names(local):
        # body permuted the layout; fold the permutation back in
        perm = la.superop_matrix([_permutation_matrix(body_regs, local)])
        body = perm @ body
    t = body @ a1
    radius = float(np.max(np.abs(np.linalg.eigvals(t)), initial=0.0)) if d * d <= 4096 else np.inf
    if radius < 1 - LOOP.spectral_margin:
        # A0 (I - T)^{-1} via a linear solve on the transpose
        x = np.linalg.solve((np.eye(d * d) - t).T, a0.T).T
        return LoopSolution(x, radius, "closed-form", 0)
    acc = a0.copy()
    term = a0.copy()
    inc = la.max_abs(term)
    for n in range(1, LOOP.max_iterations + 1):
        term = term @ t
        inc = la.max_abs(term)
        acc += term
        if inc < LOOP.series_tol:
            return LoopSolution(acc, radius, "series", n)
    raise LoopDivergenceError(s, radius, inc, LOOP.max_iterations)


def _embed_local(op: np.ndarray, targets: Regs, local: Regs) -> np.ndarray:
    from .spaces import embed

    return embed(op, targets, local)


def _permutation_matrix(src: Regs, dst: Regs) -> np.ndarray:
    """Unitary ``P`` with ``P rho P^dagger`` = ``rho`` relaid from ``src`` to ``dst``."""
    d = total_dim(src)
    order = [names(src).index(n) for n in names(dst)]
    return np.eye(d, dtype=complex).reshape(dims(src) + (d,)).transpose(order + [len(src)]).reshape(d, d)


@lru_cache(maxsize=512)
def loop_solution(s: WhileMeas, local: Regs, decl: tuple[Register, ...] = ()) -> LoopSolution:
    return _loop_matrix(s, local, decl)


@lru_cache(maxsize=512)
def loop_kraus(s: WhileMeas, local: Regs, decl: tuple[Register, ...] = ()) -> tuple[np.ndarray, ...]:
    d = total_dim(local)
    sol = loop_solution(s, local, decl)
    return tuple(la.kraus_from_superop(sol.matrix, d, d))


# semantic functions -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SemanticFn:
    """A superoperator from ``inputs`` to ``outputs`` in row-major vectorized form."""

    inputs: Regs
    outputs: Regs
    matrix: np.ndarray
    _kraus: Optional[tuple] = field(default=None, repr=False)

    @property
    def d_in(self) -> int:
        return total_dim(self.inputs)

    @property
    def d_out(self) -> int:
        return total_dim(self.outputs)

    @cached_property
    def kraus(self) -> list[np.ndarray]:
        if self._kraus is not None:
            return list(self._kraus)
        return la.kraus_from_superop(self.matrix, self.d_in, self.d_out)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return la.apply_superop(self.matrix, rho, self.d_out)

    def choi(self) -> np.ndarray:
        return la.superop_to_choi(self.matrix, self.d_in, self.d_out)

    def is_cp(self, tol: float = 1e-8) -> bool:
        return la.min_eig(self.choi()) >= -tol

    def trace_gap(self) -> float:
        """``1 - lambda_max(E*(I))``; non-negative iff trace-nonincreasing."""
        return 1.0 - la.max_eig(self.dual()(np.eye(self.d_out)))

    def is_trace_preserving(self, tol: float = 1e-8) -> bool:
        return la.max_abs(self.dual()(np.eye(self.d_out)) - np.eye(self.d_in)) <= tol

    def dual(self) -> "SemanticFn":
        ks = None if self._kraus is None else tuple(la.dag(k) for k in self._kraus)
        return SemanticFn(self.outputs, self.inputs, la.dag(self.matrix), ks)

    def compose(self, first: "SemanticFn") -> "SemanticFn":
        """``self`` after ``first``."""
        if names(first.outputs) != names(self.inputs):
            raise ValueError("cannot compose: register layouts differ")
        return SemanticFn(first.inputs, self.outputs, self.matrix @ first.matrix)


def dual(e: SemanticFn) -> SemanticFn:
    return e.dual()


def denote(p: Program | Stmt, regs: Sequence[Register] | None = None, decl: dict[str, Register] | None = None) -> SemanticFn:
    """The semantic function of ``p`` on the layout ``regs``."""
    if isinstance(p, Program):
        regs = p.input_regs if regs is None else tuple(regs)
        decl = {r.name: r for r in p.registers} | (decl or {})
        mat, out_regs = statement_matrix(p.body, tuple(regs), decl)
        target = p.output_regs
        if names(out_regs) != names(target) and sorted(names(out_regs)) == sorted(names(target)):
            mat = la.superop_matrix([_permutation_matrix(out_regs, target)]) @ mat
            out_regs = target
        return SemanticFn(tuple(regs), out_regs, mat)
    if regs is None:
        raise ValueError("a register layout is required for a bare statement")
    mat, out_regs = statement_matrix(p, tuple(regs), decl)
    return SemanticFn(tuple(regs), out_regs, mat)


def unitary_fn(u: np.ndarray, regs: Regs) -> SemanticFn:
    return SemanticFn(regs, regs, la.superop_matrix([u]), (np.asarray(u, dtype=complex),))


def kraus_fn(kraus: Sequence[np.ndarray], inputs: Regs, outputs: Regs | None = None) -> SemanticFn:
    ks = tuple(np.asarray(k, dtype=complex) for k in kraus)
    return SemanticFn(inputs, inputs if outputs is None else outputs, la.superop_matrix(ks), ks)


# predicate transformer (dual semantics) --------------------------------------

def run_dual(
    p: Program | Stmt,
    pred: np.ndarray,
    regs_before: Sequence[Register] | None = None,
    decl: dict[str, Register] | None = None,
) -> tuple[np.ndarray, Regs]:
    """``[[p]]*(pred)`` where ``pred`` lives on the output layout.

    Returns the transformed operator on ``regs_before`` (the input layout).
    For a program ``pred`` must be laid out on ``p.output_regs``.
    """
    if isinstance(p, Program):
        regs_before = p.input_regs if regs_before is None else tuple(regs_before)
        decl = {r.name: r for r in p.registers} | (decl or {})
        natural = flow(p.body, tuple(regs_before), decl)
        pred = reorder(pred, p.output_regs, natural) if names(natural) != names(p.output_regs) else pred
        return _dual(p.body, np.asarray(pred, dtype=complex), tuple(regs_before), decl), tuple(regs_before)
    if regs_before is None:
        raise ValueError("a register layout is required for a bare statement")
    return _dual(p, np.asarray(pred, dtype=complex), tuple(regs_before), decl or {}), tuple(regs_before)


def _dual(s: Stmt, pred: np.ndarray, before: Regs, decl: dict[str, Register]) -> np.ndarray:
    if isinstance(s, Skip):
        return pred
    if isinstance(s, Seq):
        layouts = [before]
        for t in s.stmts[:-1]:
            layouts.append(flow(t, layouts[-1], decl))
        for t, lay in zip(reversed(s.stmts), reversed(layouts)):
            pred = _dual(t, pred, lay, decl)
        return pred
    if isinstance(s, Init):
        target = lookup(before, [s.reg])
        ops = [la.dag(k) for k in init_kraus(target[0].dim)]
        return conjugate_local(ops, pred, before, target)
    if isinstance(s, Unitary):
        return conjugate_local([la.dag(s.gate.matrix)], pred, before, lookup(before, s.regs))
    if isinstance(s, TraceOut):
        after = flow(s, before, decl)
        from .spaces import extend

        return extend(pred, after, before)
    if isinstance(s, ApplySuper):
        after = flow(s, before, decl)
        ins = lookup(before, s.ins)
        outs = _out_regs(s, before, decl)
        ops = [la.dag(k) for k in s.channel.kraus]
        return conjugate_local(ops, pred, after, outs, ins, before)
    if isinstance(s, IfMeas):
        target = lookup(before, s.regs)
        after = flow(s, before, decl)
        total = None
        for k, branch in s.branches:
            branch_after = flow(branch, before, decl)
            local = reorder(pred, after, branch_after) if names(after) != names(branch_after) else pred
            inner = _dual(branch, local, before, decl)
            part = conjugate_local([la.dag(s.meas[k])], inner, before, target)
            total = part if total is None else total + part
        return total
    if isinstance(s, WhileMeas):
        local = loop_registers(s, before)
        kraus = loop_kraus(s, local, _freeze_decl(decl))
        return conjugate_local([la.dag(k) for k in kraus], pred, before, local)
    raise TypeError(f"not a statement: {s!r}")


# losslessness ---------------------------------------------------------------

@dataclass
class LoopCertificate:
    loop: WhileMeas
    registers: Regs
    peripheral_eigenvalues: list[complex]
    max_trace: float
    passed: bool


@dataclass
class LosslessReport:
    lossless: bool
    trace_defect: float
    loops: list[LoopCertificate]
    note: str = ""

    def __bool__(self) -> bool:
        return self.lossless

    @property
    def certificate_agrees(self) -> bool:
        return all(c.passed for c in self.loops) == self.lossless


def is_lossless(p: Program | Stmt, regs: Sequence[Register] | None = None, tol: float = 1e-8) -> LosslessReport:
    """Trace preservation of ``[[p]]`` plus the peripheral-eigenvector test for each loop.

    The verdict is the definitional one (``[[p]]*(I) = I``); each loop also
    carries a certificate from the eigenvectors of
    ``X -> sum_i (M1^dagger E_i^dagger) X (E_i M1)`` with modulus-one eigenvalues.
    """
    if isinstance(p, Program):
        before = p.input_regs if regs is None else tuple(regs)
        decl = {r.name: r for r in p.registers}
        body = p.body
    else:
        if regs is None:
            raise ValueError("a register layout is required for a bare statement")
        before, decl, body = tuple(regs), {}, p
    after = flow(body, before, decl)
    try:
        e_star_id = _dual(body, np.eye(total_dim(after)), before, decl)
    except LoopDivergenceError as exc:
        return LosslessReport(False, float("nan"), [], note=str(exc))
    defect = la.max_abs(e_star_id - np.eye(total_dim(before)))
    certs = []
    for s, live in _loops_with_layout(body, before, decl):
        certs.append(loop_certificate(s, loop_registers(s, live), decl))
    return LosslessReport(defect <= tol, defect, certs)


def _loops_with_layout(s: Stmt, live: Regs, decl) -> list[tuple[WhileMeas, Regs]]:
    found = []
    if isinstance(s, Seq):
        for t in s.stmts:
            found.extend(_loops_with_layout(t, live, decl))
            live = flow(t, live, decl)
    elif isinstance(s, IfMeas):
        for _, t in s.branches:
            found.extend(_loops_with_layout(t, live, decl))
    elif isinstance(s, WhileMeas):
        found.append((s, live))
        found.extend(_loops_with_layout(s.body, live, decl))
    return found


def loop_certificate(s: WhileMeas, local: Regs, decl: dict[str, Register] | None = None, tol: float = 1e-8) -> LoopCertificate:
    decl = decl or {}
    meas_regs = lookup(local, s.regs)
    m1 = _embed_local(s.meas[1], meas_regs, local)
    body, body_regs = statement_matrix(s.body, local, decl)
    if names(body_regs) != names(local):
        body = la.superop_matrix([_permutation_matrix(body_regs, local)]) @ body
    d = total_dim(local)
    kraus = la.kraus_from_superop(body, d, d)
    g = [la.dag(k @ m1) for k in kraus]
    mat = la.superop_matrix(g)
    w, v = np.linalg.eig(mat)
    peripheral = [i for i in range(len(w)) if abs(w[i]) >= 1 - tol]
    max_trace = 0.0
    for i in peripheral:
        x = v[:, i].reshape(d, d)
        max_trace = max(max_trace, abs(np.trace(x)) / max(np.linalg.norm(x), 1e-300))
    return LoopCertificate(s, local, [complex(w[i]) for i in peripheral], max_trace, max_trace <= 1e-6)


# small-step semantics -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Configuration:
    """``remaining`` is ``None`` once the program has terminated."""

    remaining: Optional[Stmt]
    state: np.ndarray
    regs: Regs

    @property
    def terminated(self) -> bool:
        return self.remaining is None

    @property
    def weight(self) -> float:
        return float(np.real(np.trace(self.state)))


def step(c: Configuration, decl: dict[str, Register] | None = None) -> list[tuple[Optional[int], Configuration]]:
    """One transition; measurement steps are labelled with their outcome, others with ``None``."""
    if c.terminated:
        raise ValueError("terminated configuration has no successor")
    s, rho, regs = c.remaining, c.state, c.regs
    decl = decl or {}
    if isinstance(s, Seq):
        head, tail = s.stmts[0], s.stmts[1:]
        rest = tail[0] if len(tail) == 1 else Seq(tail)
        out = []
        for label, nxt in step(Configuration(head, rho, regs), decl):
            if nxt.terminated:
                remaining = rest
            elif isinstance(nxt.remaining, Seq):
                remaining = Seq(nxt.remaining.stmts + tail)
            else:
                remaining = Seq((nxt.remaining,) + tail)
            out.append((label, Configuration(remaining, nxt.state, nxt.regs)))
        return out
    if isinstance(s, IfMeas):
        target = lookup(regs, s.regs)
        return [
            (k, Configuration(branch, conjugate_local([s.meas[k]], rho, regs, target), regs))
            for k, branch in s.branches
        ]
    if isinstance(s, WhileMeas):
        target = lookup(regs, s.regs)
        exit_state = conjugate_local([s.meas[0]], rho, regs, target)
        again = conjugate_local([s.meas[1]], rho, regs, target)
        body_then_loop = Seq((s.body, s)) if not isinstance(s.body, Seq) else Seq(s.body.stmts + (s,))
        if isinstance(s.body, Skip):
            body_then_loop = s
        return [(0, Configuration(None, exit_state, regs)), (1, Configuration(body_then_loop, again, regs))]
    out, out_regs = _run(s, rho, regs, decl)
    return [(None, Configuration(None, out, out_regs))]


@dataclass
class BranchTree:
    config: Configuration
    children: list[tuple[Optional[int], float, "BranchTree"]] = field(default_factory=list)

    @property
    def weight(self) -> float:
        return self.config.weight

    def leaves(self) -> list[Configuration]:
        if not self.children:
            return [self.config]
        out = []
        for _, _, child in self.children:
            out.extend(child.leaves())
        return out

    def terminated_sum(self) -> np.ndarray | None:
        total = None
        for leaf in self.leaves():
            if leaf.terminated:
                total = leaf.state if total is None else total + reorder(leaf.state, leaf.regs, self._out_regs())
        return total

    def _out_regs(self) -> Regs:
        for leaf in self.leaves():
            if leaf.terminated:
                return leaf.regs
        return self.config.regs


PRUNE = 1e-12


def expand(c: Configuration, depth: int, decl: dict[str, Register] | None = None, prune: float = PRUNE) -> BranchTree:
    """Branching tree of ``depth`` transition steps; light branches are dropped."""
    node = BranchTree(c)
    if depth <= 0 or c.terminated:
        return node
    for label, nxt in step(c, decl):
        w = nxt.weight
        if w < prune:
            continue
        node.children.append((label, w, expand(nxt, depth - 1, decl, prune)))
    return node


def outcome_profile(
    s: Stmt,
    rho: np.ndarray,
    regs: Regs,
    max_events: int,
    decl: dict[str, Register] | None = None,
    prune: float = PRUNE,
) -> dict[tuple, float]:
    """Probabilities of measurement-outcome sequences, cut after ``max_events`` measurements.

    Terminated paths end with the marker ``"halt"``.
    """
    profile: dict[tuple, float] = {}
    stack = [(Configuration(s, np.asarray(rho, dtype=complex), tuple(regs)), ())]
    while stack:
        c, labels = stack.pop()
        if c.terminated or len(labels) >= max_events:
            key = labels + (("halt",) if c.terminated else ())
            profile[key] = profile.get(key, 0.0) + c.weight
            continue
        for label, nxt in step(c, decl):
            if nxt.weight < prune:
                continue
            stack.append((nxt, labels if label is None else labels + (label,)))
    return profile


def loop_iterates(s: WhileMeas, local: Regs, decl: dict[str, Register] | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Matrices ``(A0, A1, A_body)`` of a loop on its local registers."""
    meas_regs = lookup(local, s.regs)
    a0 = la.superop_matrix([_embed_local(s.meas[0], meas_regs, local)])
    a1 = la.superop_matrix([_embed_local(s.meas[1], meas_regs, local)])
    body, body_regs = statement_matrix(s.body, local, decl or {})
    if names(body_regs) != names(local):
        body = la.superop_matrix([_permutation_matrix(body_regs, local)]) @ body
    return a0, a1, body
