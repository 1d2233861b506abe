"""Recursive-descent parser for ``.qw`` program text.

A file is a preamble of ``var`` and ``let`` declarations followed by a
``;``-separated statement list::

    var q : 2, r : 2;
    let M = meas { 0: [[1,0],[0,0]], 1: [[0,0],[0,1]] };
    q := |0>;
    if M[q] = 0 -> skip [] 1 -> q := X[q] fi
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..spaces import Register
from . import builtins
from .ast import (
    ApplySuper,
    Channel,
    Gate,
    IfMeas,
    Init,
    Measurement,
    Program,
    Skip,
    Stmt,
    TraceOut,
    Unitary,
    WhileMeas,
    seq,
)
from .check import WellFormednessError, check_channel, check_measurement, output_registers


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


_NUM = r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?"
_TOKEN_SPEC = [
    ("WS", r"[ \t\r\n]+"),
    ("COMMENT", r"#[^\n]*"),
    ("KET0", r"\|0>"),
    ("BOX", r"\[\]"),
    ("ARROW", r"->"),
    ("ASSIGN", r":="),
    ("NUMBER", rf"[+-]?{_NUM}(?:[+-](?:{_NUM})?i|i)?"),
    ("IDENT", r"[A-Za-z_][A-Za-z_0-9]*(?:<\d+>)?"),
    ("PUNCT", r"[\[\]{}(),;:=*]"),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{n}>{p})" for n, p in _TOKEN_SPEC))
KEYWORDS = {"skip", "if", "fi", "while", "do", "od", "trout", "var", "let", "meas", "kraus"}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        tok = m.group()
        if kind not in ("WS", "COMMENT"):
            if kind == "IDENT" and tok in KEYWORDS:
                kind = "KW"
            tokens.append(Token(kind, tok, line, pos - line_start + 1))
        newlines = tok.count("\n")
        if newlines:
            line += newlines
            line_start = pos + tok.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


def parse_complex(text: str) -> complex:
    t = text
    if t.endswith("i"):
        body = t[:-1]
        # split at the last sign that is not part of an exponent or leading
        split = None
        for k in range(len(body) - 1, 0, -1):
            if body[k] in "+-" and body[k - 1] not in "eE":
                split = k
                break
        if split is None:
            return complex(0.0, float(body) if body not in ("", "+", "-") else float(body + "1"))
        re_part, im_part = body[:split], body[split:]
        if im_part in ("+", "-"):
            im_part += "1"
        return complex(float(re_part), float(im_part))
    return complex(float(t), 0.0)


class _Parser:
    def __init__(self, text: str, tol: float):
        self.toks = tokenize(text)
        self.i = 0
        self.tol = tol
        self.registers: dict[str, Register] = {}
        self.reg_order: list[Register] = []
        self.gates: dict[str, Gate] = dict(builtins.GATES)
        self.measurements: dict[str, Measurement] = {}
        self.channels: dict[str, Channel] = {}

    # token helpers
    @property
    def cur(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        t = tok or self.cur
        return ParseError(msg, t.line, t.col)

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.cur
        return t.kind == kind and (text is None or t.text == text)

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        if self.at(kind, text):
            t = self.cur
            self.i += 1
            return t
        return None

    def expect(self, kind: str, text: str | None = None) -> Token:
        t = self.accept(kind, text)
        if t is None:
            want = text or kind
            got = self.cur.text or self.cur.kind
            raise self.error(f"expected {want!r}, found {got!r}")
        return t

    # grammar
    def program(self) -> Program:
        while self.at("KW", "var") or self.at("KW", "let"):
            if self.accept("KW", "var"):
                self.var_decl()
            else:
                self.expect("KW", "let")
                self.let_decl()
        start = self.cur
        body = self.stmts()
        if not self.at("EOF"):
            raise self.error(f"unexpected {self.cur.text!r}")
        prog = Program(tuple(self.reg_order), body)
        try:
            output_registers(prog.body, prog.input_regs, prog.registers, self.tol)
        except WellFormednessError as exc:
            raise self.error(str(exc), start) from exc
        return prog

    def var_decl(self) -> None:
        while True:
            name_tok = self.expect("IDENT")
            self.expect("PUNCT", ":")
            dim_tok = self.expect("NUMBER")
            try:
                dim = int(dim_tok.text)
            except ValueError:
                raise self.error("register dimension must be a positive integer", dim_tok) from None
            if dim < 1:
                raise self.error("register dimension must be a positive integer", dim_tok)
            if name_tok.text in self.registers:
                raise self.error(f"register {name_tok.text} declared twice", name_tok)
            reg = Register(name_tok.text, dim)
            self.registers[reg.name] = reg
            self.reg_order.append(reg)
            if not self.accept("PUNCT", ","):
                break
        self.expect("PUNCT", ";")

    def let_decl(self) -> None:
        name_tok = self.expect("IDENT")
        name = name_tok.text
        self.expect("PUNCT", "=")
        if self.accept("KW", "meas"):
            self.expect("PUNCT", "{")
            ops: dict[int, np.ndarray] = {}
            while True:
                k_tok = self.expect("NUMBER")
                try:
                    k = int(k_tok.text)
                except ValueError:
                    raise self.error("measurement outcomes must be integers", k_tok) from None
                if k in ops:
                    raise self.error(f"duplicate outcome {k}", k_tok)
                self.expect("PUNCT", ":")
                ops[k] = self.matrix()
                if not self.accept("PUNCT", ","):
                    break
            self.expect("PUNCT", "}")
            m = Measurement.of(name, ops)
            try:
                check_measurement(m, self.tol)
            except WellFormednessError as exc:
                raise self.error(str(exc), name_tok) from exc
            self.measurements[name] = m
            self.gates.pop(name, None)
            self.channels.pop(name, None)
        elif self.accept("KW", "kraus"):
            self.expect("PUNCT", "{")
            ks = [self.matrix()]
            while self.accept("PUNCT", ","):
                ks.append(self.matrix())
            self.expect("PUNCT", "}")
            c = Channel.of(name, ks)
            try:
                check_channel(c, self.tol)
            except WellFormednessError as exc:
                raise self.error(str(exc), name_tok) from exc
            self.channels[name] = c
            self.gates.pop(name, None)
            self.measurements.pop(name, None)
        else:
            self.gates[name] = Gate.of(name, self.matrix())
            self.measurements.pop(name, None)
            self.channels.pop(name, None)
        self.expect("PUNCT", ";")

    def matrix(self) -> np.ndarray:
        start = self.expect("PUNCT", "[")
        rows = [self.row()]
        while self.accept("PUNCT", ","):
            rows.append(self.row())
        self.expect("PUNCT", "]")
        if len({len(r) for r in rows}) != 1:
            raise self.error("matrix rows have different lengths", start)
        return np.array(rows, dtype=complex)

    def row(self) -> list[complex]:
        self.expect("PUNCT", "[")
        vals = [self.number()]
        while self.accept("PUNCT", ","):
            vals.append(self.number())
        self.expect("PUNCT", "]")
        return vals

    def number(self) -> complex:
        tok = self.expect("NUMBER")
        z = parse_complex(tok.text)
        if not np.isfinite(z.real) or not np.isfinite(z.imag):
            raise self.error("non-finite literal", tok)
        return z

    def stmts(self) -> Stmt:
        items = [self.stmt()]
        while self.accept("PUNCT", ";"):
            if self.at("EOF") or self.at("KW", "fi") or self.at("KW", "od") or self.at("BOX"):
                break
            items.append(self.stmt())
        return seq(*items) if len(items) > 1 else items[0]

    def reg_name(self) -> str:
        tok = self.expect("IDENT")
        if tok.text not in self.registers:
            raise self.error(f"unknown register {tok.text}", tok)
        return tok.text

    def reg_list(self) -> tuple[str, ...]:
        regs = [self.reg_name()]
        while self.accept("PUNCT", ","):
            regs.append(self.reg_name())
        return tuple(regs)

    def stmt(self) -> Stmt:
        t = self.cur
        if self.accept("KW", "skip"):
            return Skip()
        if self.accept("KW", "trout"):
            return TraceOut(self.reg_name())
        if self.accept("KW", "if"):
            meas, regs = self.meas_ref()
            self.expect("PUNCT", "=")
            branches: list[tuple[int, Stmt]] = []
            while True:
                k_tok = self.expect("NUMBER")
                try:
                    k = int(k_tok.text)
                except ValueError:
                    raise self.error("branch labels must be integers", k_tok) from None
                if k not in meas.outcomes:
                    raise self.error(f"{k} is not an outcome of {meas.name}", k_tok)
                if any(k == b for b, _ in branches):
                    raise self.error(f"duplicate branch {k}", k_tok)
                self.expect("ARROW")
                branches.append((k, self.stmts()))
                if not self.accept("BOX"):
                    break
            end = self.expect("KW", "fi")
            if sorted(b for b, _ in branches) != sorted(meas.outcomes):
                raise self.error(f"missing branches for measurement {meas.name}", end)
            return IfMeas(regs, meas, tuple(sorted(branches, key=lambda kv: kv[0])))
        if self.accept("KW", "while"):
            meas, regs = self.meas_ref()
            if sorted(meas.outcomes) != [0, 1]:
                raise self.error(f"loop measurement {meas.name} must have outcomes 0 and 1", t)
            self.expect("PUNCT", "=")
            one = self.expect("NUMBER")
            if one.text != "1":
                raise self.error("loops are written `while M[q] = 1 do ... od`", one)
            self.expect("KW", "do")
            body = self.stmts()
            self.expect("KW", "od")
            return WhileMeas(regs, meas, body)
        if self.at("IDENT"):
            lhs = self.reg_list()
            self.expect("ASSIGN")
            if self.accept("KET0"):
                if len(lhs) != 1:
                    raise self.error("initialization takes a single register", t)
                return Init(lhs[0])
            name_tok = self.expect("IDENT")
            self.expect("PUNCT", "[")
            rhs = self.reg_list()
            self.expect("PUNCT", "]")
            name = name_tok.text
            if name in self.channels:
                return ApplySuper(rhs, lhs, self.channels[name])
            if name in self.gates:
                if lhs != rhs:
                    raise self.error("a unitary must be applied in place (q := U[q])", name_tok)
                gate = self.gates[name]
                return self.checked_unitary(Unitary(rhs, gate), name_tok)
            raise self.error(f"unknown gate or channel {name}", name_tok)
        raise self.error(f"unexpected {t.text or t.kind!r}")

    def checked_unitary(self, s: Unitary, tok: Token) -> Unitary:
        from .. import linalg as la

        d = 1
        for r in s.regs:
            d *= self.registers[r].dim
        if s.gate.matrix.shape != (d, d):
            raise self.error(f"gate {s.gate.name} has shape {s.gate.matrix.shape}, registers need {d}x{d}", tok)
        if not la.is_unitary(s.gate.matrix, self.tol):
            raise self.error(f"non-unitary gate {s.gate.name}", tok)
        return s

    def meas_ref(self) -> tuple[Measurement, tuple[str, ...]]:
        name_tok = self.expect("IDENT")
        if name_tok.text not in self.measurements:
            raise self.error(f"unknown measurement {name_tok.text}", name_tok)
        self.expect("PUNCT", "[")
        regs = self.reg_list()
        self.expect("PUNCT", "]")
        meas = self.measurements[name_tok.text]
        d = 1
        for r in regs:
            d *= self.registers[r].dim
        if meas[meas.outcomes[0]].shape != (d, d):
            raise self.error(f"measurement {meas.name} does not fit registers {regs}", name_tok)
        return meas, regs


def parse(text: str, tol: float = 1e-9) -> Program:
    """Parse program text; raises :class:`ParseError` with a position on any error."""
    return _Parser(text, tol).program()


def parse_file(path) -> Program:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())
