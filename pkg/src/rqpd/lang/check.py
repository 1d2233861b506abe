"""Static well-formedness checks shared by the parser and the AST builders."""

from __future__ import annotations

import numpy as np

from .. import linalg as la
from ..spaces import Register, Regs, names, total_dim
from .ast import (
    ApplySuper,
    Channel,
    IfMeas,
    Init,
    Measurement,
    Seq,
    Skip,
    Stmt,
    TraceOut,
    Unitary,
    WhileMeas,
)

TOL = 1e-9


class WellFormednessError(ValueError):
    pass


def check_measurement(m: Measurement, tol: float = TOL) -> None:
    ops = list(m.ops.values())
    if not ops:
        raise WellFormednessError(f"measurement {m.name} has no outcomes")
    d = ops[0].shape[0]
    for o in ops:
        if o.shape != (d, d):
            raise WellFormednessError(f"measurement {m.name} mixes operator shapes")
    s = sum(la.dag(o) @ o for o in ops)
    if la.max_abs(s - np.eye(d)) > tol:
        raise WellFormednessError(f"measurement {m.name} is incomplete (sum M^dagger M != I)")


def check_channel(c: Channel, tol: float = TOL) -> None:
    ks = c.kraus
    shp = ks[0].shape
    if any(k.shape != shp for k in ks):
        raise WellFormednessError(f"channel {c.name} mixes Kraus shapes")
    if not la.is_trace_preserving(ks, tol):
        raise WellFormednessError(f"channel {c.name} is not trace-preserving")


def _dims_of(regs: tuple[str, ...], live: dict[str, Register]) -> int:
    out = 1
    for r in regs:
        if r not in live:
            raise WellFormednessError(f"register {r} is not available here")
        out *= live[r].dim
    return out


def output_registers(body: Stmt, inputs: Regs, declared: Regs, tol: float = TOL) -> Regs:
    """Validate ``body`` against the live register set and return the output registers."""
    decl = {r.name: r for r in declared}
    return tuple(_flow(body, tuple(inputs), decl, tol))


def _flow(s: Stmt, live: Regs, decl: dict[str, Register], tol: float) -> Regs:
    env = {r.name: r for r in live}
    if isinstance(s, Skip):
        return live
    if isinstance(s, Seq):
        for t in s.stmts:
            live = _flow(t, live, decl, tol)
        return live
    if isinstance(s, Init):
        _dims_of((s.reg,), env)
        return live
    if isinstance(s, TraceOut):
        _dims_of((s.reg,), env)
        return tuple(r for r in live if r.name != s.reg)
    if isinstance(s, Unitary):
        if len(set(s.regs)) != len(s.regs):
            raise WellFormednessError(f"repeated register in {s.regs}")
        d = _dims_of(s.regs, env)
        u = s.gate.matrix
        if u.shape != (d, d):
            raise WellFormednessError(f"gate {s.gate.name} has shape {u.shape}, registers need {d}x{d}")
        if not la.is_unitary(u, tol):
            raise WellFormednessError(f"gate {s.gate.name} is not unitary")
        return live
    if isinstance(s, (IfMeas, WhileMeas)):
        if len(set(s.regs)) != len(s.regs):
            raise WellFormednessError(f"repeated register in {s.regs}")
        d = _dims_of(s.regs, env)
        for o in s.meas.ops.values():
            if o.shape != (d, d):
                raise WellFormednessError(f"measurement {s.meas.name} does not fit registers {s.regs}")
        check_measurement(s.meas, tol)
        if isinstance(s, WhileMeas):
            if sorted(s.meas.outcomes) != [0, 1]:
                raise WellFormednessError("loop measurements must have exactly outcomes 0 and 1")
            after = _flow(s.body, live, decl, tol)
            if sorted(names(after)) != sorted(names(live)):
                raise WellFormednessError("a loop body must leave the register set unchanged")
            return live
        labels = [k for k, _ in s.branches]
        if sorted(labels) != sorted(s.meas.outcomes):
            raise WellFormednessError(
                f"branches {sorted(labels)} do not match outcomes {sorted(s.meas.outcomes)} of {s.meas.name}"
            )
        outs = [_flow(t, live, decl, tol) for _, t in s.branches]
        ref = sorted(names(outs[0]))
        if any(sorted(names(o)) != ref for o in outs):
            raise WellFormednessError("branches of a conditional end with different registers")
        return outs[0]
    if isinstance(s, ApplySuper):
        d_in = _dims_of(s.ins, env)
        rest = [r for r in live if r.name not in set(s.ins)]
        for r in s.outs:
            if r not in decl:
                raise WellFormednessError(f"unknown register {r}")
            if r in set(names(rest)):
                raise WellFormednessError(f"output register {r} is already in use")
        if len(set(s.outs)) != len(s.outs) or len(set(s.ins)) != len(s.ins):
            raise WellFormednessError("repeated register in channel application")
        d_out = total_dim([decl[r] for r in s.outs])
        for k in s.channel.kraus:
            if k.shape != (d_out, d_in):
                raise WellFormednessError(
                    f"channel {s.channel.name} has Kraus shape {k.shape}, registers need {d_out}x{d_in}"
                )
        check_channel(s.channel, tol)
        if set(s.ins) == set(s.outs):
            return live
        return tuple(rest) + tuple(decl[r] for r in s.outs)
    raise WellFormednessError(f"not a statement: {s!r}")
