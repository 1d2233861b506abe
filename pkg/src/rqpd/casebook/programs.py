"""Program sources for the case studies, generated as ``.qw`` text.

Builders return source text so that exported fixtures are exactly what the
checks ran on.  ``load`` parses a builder's output.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .. import linalg as la
from ..lang import parse
from ..lang.ast import Program
from ..lang.pretty import format_matrix

COMPUTATIONAL = "let M = meas {0: [[1,0],[0,0]], 1: [[0,0],[0,1]]};"


def _meas_basis(name: str, dim: int, outcomes=None) -> str:
    outcomes = list(range(dim)) if outcomes is None else outcomes
    parts = [f"{k}: {format_matrix(la.proj(la.ket(i, dim)))}" for k, i in zip(outcomes, range(dim))]
    return f"let {name} = meas {{{', '.join(parts)}}};"


def working_left() -> str:
    return f"""var q : 2;
{COMPUTATIONAL}
q := |0>; q := H[q];
if M[q] = 0 -> q := X[q] [] 1 -> q := H[q] fi"""


def working_right() -> str:
    return """var q : 2;
let N = meas {0: [[0.5,0.5],[0.5,0.5]], 1: [[0.5,-0.5],[-0.5,0.5]]};
q := |0>;
if N[q] = 0 -> q := Z[q] [] 1 -> q := H[q] fi;
q := H[q]"""


def working_if_left() -> str:
    return f"""var q : 2;
{COMPUTATIONAL}
if M[q] = 0 -> q := X[q] [] 1 -> q := H[q] fi"""


def working_if_right() -> str:
    return """var q : 2;
let N = meas {0: [[0.5,0.5],[0.5,0.5]], 1: [[0.5,-0.5],[-0.5,0.5]]};
if N[q] = 0 -> q := Z[q] [] 1 -> q := H[q] fi"""


def weyl_operators(d: int) -> list[np.ndarray]:
    """Generalized Pauli operators ``X^a Z^b``."""
    w = np.exp(2j * np.pi / d)
    shift = np.roll(np.eye(d), 1, axis=0)
    clock = np.diag([w**k for k in range(d)])
    return [np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(clock, b) for a in range(d) for b in range(d)]


def depolarize(d: int) -> str:
    """Completely depolarizing channel: every output is ``I/d``."""
    kraus = ", ".join(format_matrix(k / d) for k in weyl_operators(d))
    return f"""var q : {d};
let Dep = kraus {{{kraus}}};
q := Dep[q]"""


def identity_program(d: int, reg: str = "q") -> str:
    return f"var {reg} : {d};\nskip"


def qbf(u: np.ndarray, trace_out: bool = True) -> str:
    m1 = np.diag([1, 0, 0, 1])
    m0 = np.diag([0, 1, 1, 0])
    tail = ";\ntrout y" if trace_out else ""
    return f"""var x : 2, y : 2;
let U = {format_matrix(u)};
let B = meas {{0: {format_matrix(m0)}, 1: {format_matrix(m1)}}};
x := |0>; y := |0>;
while B[x,y] = 1 do x := U[x]; y := U[y] od{tail}"""


def noise_kraus(kind: str, p: float) -> list[np.ndarray]:
    from ..lang.builtins import X, Y, Z

    flip = {"bitflip": X, "phaseflip": Z, "bitphaseflip": Y}[kind]
    return [np.sqrt(p) * np.eye(2), np.sqrt(1 - p) * flip]


def teleport(noise: str | None = None, p: float = 0.9) -> str:
    decl = ""
    after_q = after_p = ""
    if noise is not None:
        decl = f"\nlet E = kraus {{{', '.join(format_matrix(k) for k in noise_kraus(noise, p))}}};"
        after_q, after_p = " q := E[q];", " p := E[p];"
    return f"""var p : 2, q : 2, r : 2;
{COMPUTATIONAL}{decl}
q := |0>; r := |0>; q := H[q];{after_q} q,r := CNOT[q,r]; p,q := CNOT[p,q]; p := H[p];{after_p}
if M[q] = 0 -> skip [] 1 -> r := X[r] fi;
if M[p] = 0 -> skip [] 1 -> r := Z[r] fi"""


def qotp(n: int = 1, decrypt: bool = True) -> str:
    """Key generation, encryption, optional decryption, key disposal.

    Keys are two-bit outcomes ``xz`` written as the integer ``2x + z``.
    """
    idx = [""] if n == 1 else [str(k + 1) for k in range(n)]
    regs = ", ".join(f"p{s} : 2" for s in idx) + ", " + ", ".join(f"a{s} : 2" for s in idx) + ", " + ", ".join(f"b{s} : 2" for s in idx)
    lines = [f"var {regs};", _meas_basis("K", 4)]
    keygen = [f"a{s} := |0>" for s in idx] + [f"b{s} := |0>" for s in idx]
    keygen += [f"a{s} := H[a{s}]" for s in idx] + [f"b{s} := H[b{s}]" for s in idx]
    keygen += [f"if K[a{s},b{s}] = 0 -> skip [] 1 -> skip [] 2 -> skip [] 3 -> skip fi" for s in idx]

    def pad(s: str) -> str:
        return f"if K[a{s},b{s}] = 0 -> skip [] 1 -> p{s} := Z[p{s}] [] 2 -> p{s} := X[p{s}] [] 3 -> p{s} := Z[p{s}]; p{s} := X[p{s}] fi"

    enc = [pad(s) for s in idx]
    body = keygen + enc + (enc if decrypt else [])
    body += [f"trout a{s}" for s in idx] + [f"trout b{s}" for s in idx]
    return "\n".join(lines) + "\n" + ";\n".join(body)


def walk_shift(n: int) -> np.ndarray:
    """Shift on coin (x) position, completed to a permutation on the boundary columns.

    The completion only acts on states the loop never feeds to the body.
    """
    size = n + 1
    s = np.zeros((2 * size, 2 * size))

    def idx(d, i):
        return d * size + i

    for i in range(1, n):
        s[idx(0, i - 1), idx(0, i)] = 1
        s[idx(1, i + 1), idx(1, i)] = 1
    s[idx(1, 0), idx(0, 0)] = 1
    s[idx(1, 1), idx(1, 0)] = 1
    s[idx(0, n), idx(0, n)] = 1
    s[idx(0, n - 1), idx(1, n)] = 1
    return s


BALANCED_COIN = np.array([[1, 1j], [1j, 1]]) / np.sqrt(2)


def walk(coin: np.ndarray, n: int = 4) -> str:
    size = n + 1
    absorbed = np.zeros((size, size))
    absorbed[0, 0] = absorbed[n, n] = 1
    pos = ", ".join(f"{i}: {format_matrix(la.proj(la.ket(i, size)))}" for i in range(size))
    branches = " [] ".join(f"{i} -> skip" for i in range(size))
    return f"""var c : 2, p : {size};
let C = {format_matrix(coin)};
let S = {format_matrix(walk_shift(n))};
let M = meas {{0: {format_matrix(absorbed)}, 1: {format_matrix(np.eye(size) - absorbed)}}};
let Pos = meas {{{pos}}};
while M[p] = 1 do c := C[c]; c,p := S[c,p] od;
if Pos[p] = {branches} fi;
trout c"""


def walk_phase(n: int = 4) -> np.ndarray:
    """Diagonal unitary relating the two walks' inputs: ``|d,i> -> (-i)^(i+d+3) |d,i>``."""
    return np.diag([(-1j) ** (i + d + 3) for d in range(2) for i in range(n + 1)])


def walk_loop(coin: np.ndarray, n: int = 4) -> str:
    size = n + 1
    absorbed = np.zeros((size, size))
    absorbed[0, 0] = absorbed[n, n] = 1
    return f"""var c : 2, p : {size};
let C = {format_matrix(coin)};
let S = {format_matrix(walk_shift(n))};
let M = meas {{0: {format_matrix(absorbed)}, 1: {format_matrix(np.eye(size) - absorbed)}}};
while M[p] = 1 do c := C[c]; c,p := S[c,p] od"""


def flip_program() -> str:
    return "var q : 2;\nq := X[q]"


@lru_cache(maxsize=None)
def load(source: str) -> Program:
    return parse(source)
