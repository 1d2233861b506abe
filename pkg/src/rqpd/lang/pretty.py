from __future__ import annotations

import numpy as np

from . import builtins
from .ast import (
    ApplySuper,
    Channel,
    Gate,
    IfMeas,
    Init,
    Measurement,
    Program,
    Seq,
    Skip,
    Stmt,
    TraceOut,
    Unitary,
    WhileMeas,
    walk,
)


def format_complex(z: complex) -> str:
    re_s = repr(float(z.real))
    if z.imag == 0:
        return re_s
    im = float(z.imag)
    sign = "-" if im < 0 or (im == 0 and np.signbit(im)) else "+"
    return f"{re_s}{sign}{repr(abs(im))}i"


def format_matrix(m: np.ndarray) -> str:
    return "[" + ", ".join("[" + ", ".join(format_complex(z) for z in row) + "]" for row in np.asarray(m)) + "]"


def _stmt(s: Stmt, indent: int) -> str:
    pad = "  " * indent
    if isinstance(s, Skip):
        return pad + "skip"
    if isinstance(s, Seq):
        return ";\n".join(_stmt(t, indent) for t in s.stmts)
    if isinstance(s, Init):
        return f"{pad}{s.reg} := |0>"
    if isinstance(s, TraceOut):
        return f"{pad}trout {s.reg}"
    if isinstance(s, Unitary):
        regs = ",".join(s.regs)
        return f"{pad}{regs} := {s.gate.name}[{regs}]"
    if isinstance(s, ApplySuper):
        return f"{pad}{','.join(s.outs)} := {s.channel.name}[{','.join(s.ins)}]"
    if isinstance(s, IfMeas):
        parts = []
        for k, (label, body) in enumerate(s.branches):
            head = f"{pad}if {s.meas.name}[{','.join(s.regs)}] = " if k == 0 else f"{pad}[] "
            parts.append(f"{head}{label} ->\n{_stmt(body, indent + 1)}")
        return "\n".join(parts) + f"\n{pad}fi"
    if isinstance(s, WhileMeas):
        return f"{pad}while {s.meas.name}[{','.join(s.regs)}] = 1 do\n{_stmt(s.body, indent + 1)}\n{pad}od"
    raise TypeError(f"not a statement: {s!r}")


def _bindings(body: Stmt) -> list[str]:
    lines: list[str] = []
    seen: dict[str, object] = {}

    def bind(name: str, obj, text: str) -> None:
        if name in seen:
            if seen[name] != obj:
                raise ValueError(f"two different objects share the name {name!r}")
            return
        seen[name] = obj
        lines.append(text)

    for t in walk(body):
        if isinstance(t, Unitary):
            g: Gate = t.gate
            if builtins.GATES.get(g.name) == g:
                continue
            bind(g.name, g, f"let {g.name} = {format_matrix(g.matrix)};")
        elif isinstance(t, (IfMeas, WhileMeas)):
            m: Measurement = t.meas
            ops = ", ".join(f"{k}: {format_matrix(v)}" for k, v in m.ops.items())
            bind(m.name, m, f"let {m.name} = meas {{ {ops} }};")
        elif isinstance(t, ApplySuper):
            c: Channel = t.channel
            ks = ", ".join(format_matrix(k) for k in c.kraus)
            bind(c.name, c, f"let {c.name} = kraus {{ {ks} }};")
    return lines


def pretty(p: Program | Stmt) -> str:
    """Render a program (with its declarations) or a bare statement as source text."""
    if isinstance(p, Program):
        head: list[str] = []
        if p.registers:
            head.append("var " + ", ".join(f"{r.name} : {r.dim}" for r in p.registers) + ";")
        head.extend(_bindings(p.body))
        body = _stmt(p.body, 0)
        return "\n".join(head + [body])
    return _stmt(p, 0)
