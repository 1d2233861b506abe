"""Abstract syntax of quantum while-programs.

Matrices inside the tree are stored as hashable tuples so that two programs
compare equal exactly when they have the same structure and the same
numeric literals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Union

import numpy as np

from ..spaces import Register, Regs, lookup, tag_name

Entries = tuple[tuple[complex, ...], ...]


def freeze(matrix) -> Entries:
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    return tuple(tuple(complex(z) for z in row) for row in m)


def thaw(entries: Entries) -> np.ndarray:
    return np.array(entries, dtype=complex).reshape(len(entries), -1)


@dataclass(frozen=True)
class Gate:
    name: str
    entries: Entries

    @classmethod
    def of(cls, name: str, matrix) -> "Gate":
        return cls(name, freeze(matrix))

    @cached_property
    def matrix(self) -> np.ndarray:
        return thaw(self.entries)


@dataclass(frozen=True)
class Measurement:
    name: str
    operators: tuple[tuple[int, Entries], ...]

    @classmethod
    def of(cls, name: str, ops) -> "Measurement":
        """``ops`` is a mapping outcome -> matrix or a list indexed by outcome."""
        items = ops.items() if isinstance(ops, dict) else enumerate(ops)
        return cls(name, tuple((int(k), freeze(v)) for k, v in sorted(items, key=lambda kv: kv[0])))

    @property
    def outcomes(self) -> tuple[int, ...]:
        return tuple(k for k, _ in self.operators)

    @cached_property
    def ops(self) -> dict[int, np.ndarray]:
        return {k: thaw(v) for k, v in self.operators}

    def __getitem__(self, outcome: int) -> np.ndarray:
        return self.ops[outcome]


@dataclass(frozen=True)
class Channel:
    name: str
    kraus_entries: tuple[Entries, ...]

    @classmethod
    def of(cls, name: str, kraus) -> "Channel":
        return cls(name, tuple(freeze(k) for k in kraus))

    @cached_property
    def kraus(self) -> list[np.ndarray]:
        return [thaw(k) for k in self.kraus_entries]


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Seq:
    stmts: tuple["Stmt", ...]


@dataclass(frozen=True)
class Init:
    reg: str


@dataclass(frozen=True)
class Unitary:
    regs: tuple[str, ...]
    gate: Gate


@dataclass(frozen=True)
class IfMeas:
    regs: tuple[str, ...]
    meas: Measurement
    branches: tuple[tuple[int, "Stmt"], ...]

    def branch(self, outcome: int) -> "Stmt":
        for k, s in self.branches:
            if k == outcome:
                return s
        raise KeyError(outcome)


@dataclass(frozen=True)
class WhileMeas:
    """Runs ``body`` while the measurement yields outcome 1."""

    regs: tuple[str, ...]
    meas: Measurement
    body: "Stmt"


@dataclass(frozen=True)
class ApplySuper:
    ins: tuple[str, ...]
    outs: tuple[str, ...]
    channel: Channel


@dataclass(frozen=True)
class TraceOut:
    reg: str


Stmt = Union[Skip, Seq, Init, Unitary, IfMeas, WhileMeas, ApplySuper, TraceOut]


@dataclass(frozen=True)
class Program:
    registers: Regs
    body: Stmt = field(default_factory=Skip)

    def reg(self, name: str) -> Register:
        return lookup(self.registers, [name])[0]

    @cached_property
    def input_regs(self) -> Regs:
        """Declared registers minus those first produced by a channel output."""
        born = _born_registers(self.body)
        return tuple(r for r in self.registers if r.name not in born)

    @cached_property
    def output_regs(self) -> Regs:
        from .check import output_registers

        return output_registers(self.body, self.input_regs, self.registers)


def seq(*stmts: Stmt) -> Stmt:
    """Sequential composition, flattening nested sequences and dropping skips."""
    flat: list[Stmt] = []
    for s in stmts:
        if isinstance(s, Seq):
            flat.extend(s.stmts)
        elif isinstance(s, Skip):
            continue
        else:
            flat.append(s)
    if not flat:
        return Skip()
    if len(flat) == 1:
        return flat[0]
    return Seq(tuple(flat))


def walk(s: Stmt) -> Iterator[Stmt]:
    yield s
    if isinstance(s, Seq):
        for t in s.stmts:
            yield from walk(t)
    elif isinstance(s, IfMeas):
        for _, t in s.branches:
            yield from walk(t)
    elif isinstance(s, WhileMeas):
        yield from walk(s.body)


def variables(s: Stmt) -> tuple[str, ...]:
    """Register names mentioned by ``s``, in first-occurrence order."""
    seen: dict[str, None] = {}
    for t in walk(s):
        if isinstance(t, (Init, TraceOut)):
            seen.setdefault(t.reg)
        elif isinstance(t, (Unitary, IfMeas, WhileMeas)):
            for r in t.regs:
                seen.setdefault(r)
        elif isinstance(t, ApplySuper):
            for r in t.ins + t.outs:
                seen.setdefault(r)
    return tuple(seen)


def _born_registers(s: Stmt) -> set[str]:
    born: set[str] = set()
    first: set[str] = set()
    for t in walk(s):
        if isinstance(t, ApplySuper):
            for r in t.ins:
                first.add(r)
            for r in t.outs:
                if r not in first:
                    born.add(r)
                first.add(r)
        elif isinstance(t, (Init, TraceOut)):
            first.add(t.reg)
        elif isinstance(t, (Unitary, IfMeas, WhileMeas)):
            first.update(t.regs)
    return born


def rename(s: Stmt, mapping) -> Stmt:
    f = mapping if callable(mapping) else (lambda n: mapping.get(n, n))
    if isinstance(s, Skip):
        return s
    if isinstance(s, Seq):
        return Seq(tuple(rename(t, f) for t in s.stmts))
    if isinstance(s, Init):
        return Init(f(s.reg))
    if isinstance(s, TraceOut):
        return TraceOut(f(s.reg))
    if isinstance(s, Unitary):
        return Unitary(tuple(map(f, s.regs)), s.gate)
    if isinstance(s, IfMeas):
        return IfMeas(tuple(map(f, s.regs)), s.meas, tuple((k, rename(t, f)) for k, t in s.branches))
    if isinstance(s, WhileMeas):
        return WhileMeas(tuple(map(f, s.regs)), s.meas, rename(s.body, f))
    if isinstance(s, ApplySuper):
        return ApplySuper(tuple(map(f, s.ins)), tuple(map(f, s.outs)), s.channel)
    raise TypeError(f"not a statement: {s!r}")


def tag_copy(p, tag: int):
    """Rename every register ``q`` to ``q<tag>``; accepts a Program or a statement."""
    if tag not in (1, 2):
        raise ValueError("tag must be 1 or 2")
    f = lambda n: tag_name(n, tag)  # noqa: E731
    if isinstance(p, Program):
        return Program(tuple(r.tagged(tag) for r in p.registers), rename(p.body, f))
    return rename(p, f)
