"""Named registers and operators that live on a subset of them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import linalg as la


@dataclass(frozen=True)
class Register:
    name: str
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"register {self.name} must have positive dimension")

    def tagged(self, tag: int) -> "Register":
        return Register(tag_name(self.name, tag), self.dim)


Regs = tuple[Register, ...]


def tag_name(name: str, tag: int) -> str:
    return f"{name}<{tag}>"


def untag_name(name: str) -> str:
    return name.split("<", 1)[0]


def dims(regs: Sequence[Register]) -> tuple[int, ...]:
    return tuple(r.dim for r in regs)


def total_dim(regs: Sequence[Register]) -> int:
    return int(np.prod(dims(regs))) if regs else 1


def names(regs: Sequence[Register]) -> tuple[str, ...]:
    return tuple(r.name for r in regs)


def index_of(regs: Sequence[Register], name: str) -> int:
    for i, r in enumerate(regs):
        if r.name == name:
            return i
    raise KeyError(f"register {name!r} not in {names(regs)}")


def lookup(regs: Sequence[Register], wanted: Iterable[str]) -> Regs:
    return tuple(regs[index_of(regs, n)] for n in wanted)


@dataclass(frozen=True, eq=False)
class RegOp:
    """An operator on the tensor product of ``regs`` (in that order)."""

    matrix: np.ndarray
    regs: Regs

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "regs", tuple(self.regs))
        if m.shape != (total_dim(self.regs),) * 2:
            raise ValueError(f"operator shape {m.shape} does not fit registers {names(self.regs)}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def on(self, regs: Sequence[Register]) -> np.ndarray:
        """Full matrix on ``regs`` (identity on registers not covered)."""
        return extend(self.matrix, self.regs, regs)

    def reorder(self, regs: Sequence[Register]) -> "RegOp":
        return RegOp(reorder(self.matrix, self.regs, regs), tuple(regs))

    def __add__(self, other: "RegOp") -> "RegOp":
        regs = union(self.regs, other.regs)
        return RegOp(self.on(regs) + other.on(regs), regs)

    def __sub__(self, other: "RegOp") -> "RegOp":
        regs = union(self.regs, other.regs)
        return RegOp(self.on(regs) - other.on(regs), regs)

    def __mul__(self, scalar: float) -> "RegOp":
        return RegOp(scalar * self.matrix, self.regs)

    __rmul__ = __mul__

    def expect(self, rho: np.ndarray, regs: Sequence[Register]) -> float:
        """``tr(self . rho)`` where ``rho`` lives on ``regs`` (a superset)."""
        reduced = reduce_to(rho, regs, self.regs)
        return float(np.real(np.sum(self.matrix * reduced.T)))

    def close_to(self, other: "RegOp", tol: float = 1e-8) -> bool:
        regs = union(self.regs, other.regs)
        return la.max_abs(self.on(regs) - other.on(regs)) <= tol


def union(a: Sequence[Register], b: Sequence[Register]) -> Regs:
    seen = {r.name for r in a}
    return tuple(a) + tuple(r for r in b if r.name not in seen)


def reorder(m: np.ndarray, regs: Sequence[Register], new_regs: Sequence[Register]) -> np.ndarray:
    """Permute tensor factors of ``m`` from ``regs`` order to ``new_regs`` order."""
    if names(regs) == names(new_regs):
        return np.asarray(m, dtype=complex)
    if sorted(names(regs)) != sorted(names(new_regs)):
        raise ValueError(f"cannot reorder {names(regs)} into {names(new_regs)}")
    order = [index_of(regs, r.name) for r in new_regs]
    return la.permute(m, dims(regs), order)


def extend(m: np.ndarray, regs: Sequence[Register], new_regs: Sequence[Register]) -> np.ndarray:
    """Tensor ``m`` with identities so it acts on ``new_regs`` (a superset)."""
    present = set(names(regs))
    missing = [r for r in new_regs if r.name not in present]
    for r in regs:
        if r.name not in set(names(new_regs)):
            raise ValueError(f"register {r.name} not in target space {names(new_regs)}")
    full = np.kron(np.asarray(m, dtype=complex), np.eye(total_dim(missing)))
    return reorder(full, tuple(regs) + tuple(missing), new_regs)


def reduce_to(rho: np.ndarray, regs: Sequence[Register], keep: Sequence[Register]) -> np.ndarray:
    """Partial trace onto ``keep`` (returned in ``keep`` order)."""
    idx = [index_of(regs, r.name) for r in keep]
    red = la.partial_trace(rho, dims(regs), idx)
    sorted_regs = [regs[i] for i in sorted(idx)]
    return reorder(red, sorted_regs, keep)


def reduce_vector(psi: np.ndarray, regs: Sequence[Register], keep: Sequence[Register]) -> np.ndarray:
    """Reduced density operator of the pure state ``psi`` onto ``keep``."""
    idx = [index_of(regs, r.name) for r in keep]
    rest = [i for i in range(len(regs)) if i not in idx]
    t = np.asarray(psi, dtype=complex).reshape(dims(regs)).transpose(idx + rest)
    m = t.reshape(total_dim(keep), -1)
    return m @ m.conj().T


def embed(op: np.ndarray, targets: Sequence[Register], regs: Sequence[Register]) -> np.ndarray:
    """Operator acting as ``op`` on ``targets`` and identity elsewhere in ``regs``."""
    return extend(op, targets, regs)


def conjugate_local(
    ops: Sequence[np.ndarray],
    rho: np.ndarray,
    regs: Sequence[Register],
    targets_in: Sequence[Register],
    targets_out: Sequence[Register] | None = None,
    out_regs: Sequence[Register] | None = None,
) -> np.ndarray:
    """``sum_k K rho K^dagger`` with each ``K`` mapping ``targets_in`` to ``targets_out``.

    ``rho`` may carry leading batch axes.  The untouched registers keep their
    relative order; the result is laid out on ``out_regs`` (default: the
    untouched registers followed by ``targets_out``, or ``regs`` when the
    register set is unchanged).
    """
    regs = tuple(regs)
    targets_in = tuple(targets_in)
    targets_out = targets_in if targets_out is None else tuple(targets_out)
    rest = tuple(r for r in regs if r.name not in set(names(targets_in)))
    if out_regs is None:
        if set(names(targets_in)) == set(names(targets_out)):
            out_regs = regs
        else:
            out_regs = rest + targets_out
    rho = np.asarray(rho, dtype=complex)
    batch = rho.shape[:-2]
    d_in, d_out, d_rest = total_dim(targets_in), total_dim(targets_out), total_dim(rest)
    n = len(regs)
    order = [index_of(regs, r.name) for r in targets_in + rest]
    nb = len(batch)
    t = rho.reshape(batch + dims(regs) * 2)
    axes = list(range(nb)) + [nb + i for i in order] + [nb + n + i for i in order]
    t = t.transpose(axes).reshape(batch + (d_in, d_rest, d_in, d_rest))
    acc = np.zeros(batch + (d_out, d_rest, d_out, d_rest), dtype=complex)
    for k in ops:
        k = np.asarray(k, dtype=complex)
        acc += np.einsum("ai,...irjs,bj->...arbs", k, t, k.conj(), optimize=True)
    layout = targets_out + rest
    m = acc.reshape(batch + (d_out * d_rest, d_out * d_rest))
    if names(layout) == names(out_regs):
        return m
    order2 = [index_of(layout, r.name) for r in out_regs]
    nl = len(layout)
    t2 = m.reshape(batch + dims(layout) * 2)
    axes2 = list(range(nb)) + [nb + i for i in order2] + [nb + nl + i for i in order2]
    d = total_dim(out_regs)
    return t2.transpose(axes2).reshape(batch + (d, d))


def trace_out(rho: np.ndarray, regs: Sequence[Register], drop: Sequence[Register]) -> tuple[np.ndarray, Regs]:
    """Partial trace over ``drop``; supports leading batch axes."""
    rho = np.asarray(rho, dtype=complex)
    drop_names = set(names(drop))
    keep = tuple(r for r in regs if r.name not in drop_names)
    if rho.ndim == 2:
        return reduce_to(rho, regs, keep), keep
    batch = rho.shape[:-2]
    n = len(regs)
    nb = len(batch)
    t = rho.reshape(batch + dims(regs) * 2)
    row = list(range(nb + n))
    col = [nb + i if regs[i].name in drop_names else nb + n + i for i in range(n)]
    kept = [i for i in range(n) if regs[i].name not in drop_names]
    out = list(range(nb)) + [nb + i for i in kept] + [nb + n + i for i in kept]
    res = np.einsum(t, row + col, out)
    d = total_dim(keep)
    return res.reshape(batch + (d, d)), keep
