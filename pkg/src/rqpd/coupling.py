"""Quantum couplings, liftings and their optimization.

A coupling of ``(rho1, rho2)`` is a positive ``sigma`` on the product space
whose two partial traces are ``rho1`` and ``rho2``.  The central routine
maximizes ``tr(B sigma)`` over couplings (optionally restricted to a support
projector and/or to positive partial transpose) with a conic solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import linalg as la
from . import sdp

TRACE_TOL = 1e-8
MARGINAL_TOL = 1e-6


@dataclass
class CouplingSolution:
    witness: Optional[np.ndarray]
    value: float
    status: str  # optimal | feasible | infeasible | numerical-failure
    residuals: dict = field(default_factory=dict)
    relaxation: bool = False

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "value": self.value,
            "residuals": self.residuals,
            "relaxation": self.relaxation,
            "witness": None if self.witness is None else la.to_json(self.witness),
        }


@dataclass
class CouplingProblem:
    rho1: np.ndarray
    rho2: np.ndarray
    objective: np.ndarray
    support: Optional[np.ndarray] = None
    ppt: bool = False

    def __post_init__(self):
        self.rho1 = np.asarray(self.rho1, dtype=complex)
        self.rho2 = np.asarray(self.rho2, dtype=complex)
        self.objective = np.asarray(self.objective, dtype=complex)
        d = self.rho1.shape[0] * self.rho2.shape[0]
        if self.objective.shape != (d, d):
            raise ValueError(f"objective must be {d}x{d}, got {self.objective.shape}")
        if self.support is not None:
            self.support = np.asarray(self.support, dtype=complex)
            if self.support.shape != (d, d):
                raise ValueError(f"support projector must be {d}x{d}")


# constructions ---------------------------------------------------------------

def make_coupling(kind: str, *args, **kwargs) -> np.ndarray:
    """Named constructions: ``tensor(rho1, rho2)``, ``basis_identity(rho)``, ``unitary_unif(d, U)``."""
    if kind == "tensor":
        rho1, rho2 = args
        return np.kron(np.asarray(rho1, dtype=complex), np.asarray(rho2, dtype=complex))
    if kind == "basis_identity":
        (rho,) = args
        basis = kwargs.get("basis")
        rho = np.asarray(rho, dtype=complex)
        if basis is None:
            w, basis = la.eigh(rho)
        else:
            basis = np.asarray(basis, dtype=complex)
            if la.max_abs(la.dag(basis) @ basis - np.eye(basis.shape[1])) > 1e-9:
                raise ValueError("basis is not orthonormal")
            w = np.real(np.einsum("ji,jk,ki->i", basis.conj(), rho, basis))
            if la.max_abs(basis @ np.diag(w) @ la.dag(basis) - rho) > 1e-9:
                raise ValueError("rho is not diagonal in the supplied basis")
        d = rho.shape[0]
        out = np.zeros((d * d, d * d), dtype=complex)
        for p, b in zip(w, basis.T):
            out += max(float(p), 0.0) * la.proj(np.kron(b, b))
        return out
    if kind == "unitary_unif":
        d, u = args
        u = np.asarray(u, dtype=complex)
        if not la.is_unitary(u):
            raise ValueError("unitary_unif needs a unitary")
        v = sum(np.kron(la.ket(i, d), u @ la.ket(i, d)) for i in range(d))
        return la.proj(v) / d
    raise ValueError(f"unknown coupling kind {kind!r}")


def marginals(sigma: np.ndarray, d1: int, d2: int) -> tuple[np.ndarray, np.ndarray]:
    return la.partial_trace(sigma, (d1, d2), [0]), la.partial_trace(sigma, (d1, d2), [1])


def is_coupling(sigma: np.ndarray, rho1: np.ndarray, rho2: np.ndarray, tol: float = MARGINAL_TOL) -> bool:
    d1, d2 = rho1.shape[0], rho2.shape[0]
    m1, m2 = marginals(sigma, d1, d2)
    return la.is_psd(sigma, tol) and la.max_abs(m1 - rho1) <= tol and la.max_abs(m2 - rho2) <= tol


def residuals(sigma: np.ndarray, rho1: np.ndarray, rho2: np.ndarray, support: Optional[np.ndarray] = None) -> dict:
    d1, d2 = rho1.shape[0], rho2.shape[0]
    m1, m2 = marginals(sigma, d1, d2)
    out = {
        "marginal1": la.max_abs(m1 - rho1),
        "marginal2": la.max_abs(m2 - rho2),
        "min_eig": la.min_eig(sigma),
    }
    if support is not None:
        out["support"] = la.max_abs(support @ sigma @ support - sigma)
    return out


# solver ------------------------------------------------------------------------

COMPRESS_TOL = 1e-12
MAX_SDP_DIM = 48


def _support_isometry(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, v = la.eigh(rho)
    top = float(np.max(np.abs(w), initial=0.0))
    keep = w > COMPRESS_TOL * max(top, 1e-300)
    return v[:, keep], w[keep]


def _herm(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + la.dag(m))


def max_coupling_value(problem: CouplingProblem) -> CouplingSolution:
    """Maximize ``tr(objective . sigma)`` over couplings of ``(rho1, rho2)``.

    The search is restricted without loss to ``supp(rho1) (x) supp(rho2)``,
    which contains the range of every coupling.
    """
    rho1, rho2 = _herm(problem.rho1), _herm(problem.rho2)
    d1, d2 = rho1.shape[0], rho2.shape[0]
    t1, t2 = float(np.real(np.trace(rho1))), float(np.real(np.trace(rho2)))
    if abs(t1 - t2) > TRACE_TOL:
        return CouplingSolution(None, float("-inf"), "infeasible", {"trace_mismatch": abs(t1 - t2)}, problem.ppt)
    if max(t1, t2) <= 1e-14:
        zero = np.zeros((d1 * d2, d1 * d2), dtype=complex)
        return CouplingSolution(zero, 0.0, "optimal", residuals(zero, rho1, rho2, problem.support), problem.ppt)
    v1, w1 = _support_isometry(rho1)
    v2, w2 = _support_isometry(rho2)
    r1, r2 = v1.shape[1], v2.shape[1]
    if r1 * r2 > MAX_SDP_DIM:
        return CouplingSolution(None, float("nan"), "numerical-failure", {"error": f"compressed dimension {r1 * r2} too large"}, problem.ppt)
    v = np.kron(v1, v2)
    n = r1 * r2
    g = sdp.herm_basis(n)
    obj = la.dag(v) @ _herm(problem.objective) @ v
    c = -sdp.linear_functional(obj, n)
    m1 = sdp.hvec_rows(sdp.partial_trace_map(r1, r2, True) @ g, r1)
    m2 = sdp.hvec_rows(sdp.partial_trace_map(r1, r2, False) @ g, r2)
    rhs1 = sdp.herm_params(np.diag(w1).astype(complex))
    rhs2 = sdp.herm_params(la.dag(v2) @ rho2 @ v2)
    # the first diagonal row of the second marginal is implied by the trace
    rows = [m1, m2[1:]]
    rhs = [rhs1, rhs2[1:]]
    if problem.support is not None:
        comp = la.dag(v) @ (np.eye(d1 * d2) - _herm(problem.support)) @ v
        rows.append(sp.csr_matrix(sdp.linear_functional(comp, n)))
        rhs.append(np.zeros(1))
    blocks = [(sdp.psd_rows(g, n), n)]
    if problem.ppt:
        blocks.append((sdp.psd_rows(sdp.partial_transpose_map(r1, r2) @ g, n), n))
    res = sdp.solve(c, sp.vstack(rows).tocsr(), np.concatenate(rhs), blocks)
    if res.status == "infeasible":
        return CouplingSolution(None, float("-inf"), "infeasible", {"solver_status": res.raw_status}, problem.ppt)
    if res.x is None:
        return CouplingSolution(None, float("nan"), "numerical-failure", {"solver_status": res.raw_status}, problem.ppt)
    tau = (g @ res.x).reshape(n, n)
    sigma = _herm(v @ tau @ la.dag(v))
    out = residuals(sigma, rho1, rho2, problem.support)
    value = float(np.real(np.trace(problem.objective @ sigma)))
    status = "optimal" if res.status == "optimal" else "feasible"
    if out["marginal1"] > MARGINAL_TOL or out["marginal2"] > MARGINAL_TOL or out["min_eig"] < -1e-7:
        status = "numerical-failure"
    out["solver_status"] = res.raw_status
    return CouplingSolution(sigma, value, status, out, problem.ppt)


def lifting_exists(rho1: np.ndarray, rho2: np.ndarray, support: np.ndarray, tol: float = 1e-6) -> CouplingSolution:
    """Is there a coupling supported inside the projector ``support``?

    Decided by maximizing ``tr(X sigma)``: a lifting exists iff the maximum
    reaches ``tr(rho1)``.
    """
    sol = max_coupling_value(CouplingProblem(rho1, rho2, support))
    if not sol.ok:
        sol.residuals.setdefault("lifting_gap", float("nan"))
        return sol
    target = float(np.real(np.trace(rho1)))
    sol.residuals["lifting_gap"] = target - sol.value
    sol.status = "feasible" if sol.value >= target - tol else "infeasible"
    return sol


@dataclass
class SplitSolution:
    witnesses: Optional[list[np.ndarray]]
    value: float
    status: str


def max_split_coupling_value(parts: list[np.ndarray], rho2: np.ndarray, objectives: list[np.ndarray]) -> SplitSolution:
    """Maximize ``sum_m tr(B_m sigma_m)`` with ``tr_2 sigma_m = parts[m]`` and ``sum_m tr_1 sigma_m = rho2``.

    This is the joint program behind one-sided measurement judgments: the
    first factor is split by a measurement, the second is shared.
    """
    rho2 = _herm(np.asarray(rho2, dtype=complex))
    parts = [_herm(np.asarray(r, dtype=complex)) for r in parts]
    d1, d2 = parts[0].shape[0], rho2.shape[0]
    t1 = float(sum(np.real(np.trace(r)) for r in parts))
    t2 = float(np.real(np.trace(rho2)))
    if abs(t1 - t2) > TRACE_TOL:
        return SplitSolution(None, float("-inf"), "infeasible")
    if t2 <= 1e-14:
        return SplitSolution([np.zeros((d1 * d2,) * 2, dtype=complex) for _ in parts], 0.0, "optimal")
    v2, _ = _support_isometry(rho2)
    r2 = v2.shape[1]
    live = []
    for k, r in enumerate(parts):
        if np.real(np.trace(r)) > 1e-14:
            v1, w1 = _support_isometry(r)
            live.append((k, v1, w1))
    sizes = [v1.shape[1] * r2 for _, v1, _ in live]
    if sum(sizes) > 2 * MAX_SDP_DIM:
        return SplitSolution(None, float("nan"), "numerical-failure")
    offsets = np.concatenate([[0], np.cumsum([n * n for n in sizes])])
    nx = int(offsets[-1])

    def place(block: sp.spmatrix, i: int) -> sp.csr_matrix:
        left = sp.csr_matrix((block.shape[0], int(offsets[i])))
        right = sp.csr_matrix((block.shape[0], nx - int(offsets[i + 1])))
        return sp.hstack([left, sp.csr_matrix(block), right]).tocsr()

    c = np.zeros(nx)
    rows, rhs, blocks = [], [], []
    shared = None
    for i, ((k, v1, w1), n) in enumerate(zip(live, sizes)):
        r1 = v1.shape[1]
        g = sdp.herm_basis(n)
        v = np.kron(v1, v2)
        c[offsets[i] : offsets[i + 1]] = -sdp.linear_functional(la.dag(v) @ _herm(objectives[k]) @ v, n)
        rows.append(place(sdp.hvec_rows(sdp.partial_trace_map(r1, r2, True) @ g, r1), i))
        rhs.append(sdp.herm_params(np.diag(w1).astype(complex)))
        m2 = place(sdp.hvec_rows(sdp.partial_trace_map(r1, r2, False) @ g, r2), i)
        shared = m2 if shared is None else shared + m2
        blocks.append((place(sdp.psd_rows(g, n), i), n))
    target = sdp.herm_params(la.dag(v2) @ rho2 @ v2)
    rows.append(shared[1:])
    rhs.append(target[1:])
    res = sdp.solve(c, sp.vstack(rows).tocsr(), np.concatenate(rhs), blocks)
    if res.status == "infeasible":
        return SplitSolution(None, float("-inf"), "infeasible")
    if res.x is None:
        return SplitSolution(None, float("nan"), "numerical-failure")
    witnesses = [np.zeros((d1 * d2,) * 2, dtype=complex) for _ in parts]
    for i, ((k, v1, _), n) in enumerate(zip(live, sizes)):
        v = np.kron(v1, v2)
        tau = (sdp.herm_basis(n) @ res.x[offsets[i] : offsets[i + 1]]).reshape(n, n)
        witnesses[k] = _herm(v @ tau @ la.dag(v))
    value = float(sum(np.real(np.trace(b @ w)) for b, w in zip(objectives, witnesses)))
    return SplitSolution(witnesses, value, "optimal" if res.status == "optimal" else "feasible")


# separability ------------------------------------------------------------------

def ppt_min_eig(rho: np.ndarray, shape, factors) -> float:
    return la.min_eig(la.partial_transpose(rho, shape, factors))


def is_separable_2x2(rho: np.ndarray, tol: float = 1e-9) -> bool:
    """Peres-Horodecki test, exact on two qubits."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("is_separable_2x2 needs a 4x4 operator")
    return ppt_min_eig(rho, (2, 2), [1]) >= -tol
