"""Small complex semidefinite programs solved through Clarabel.

Each Hermitian matrix variable of size ``n`` is parametrized by ``n^2`` real
numbers (diagonal, real parts and imaginary parts of the upper triangle).
Linear maps are handled as sparse complex matrices on the row-major
vectorization, and every positivity constraint goes through the real
symmetric embedding ``[[Re, -Im], [Im, Re]]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import clarabel
import numpy as np
import scipy.sparse as sp

SQRT2 = np.sqrt(2.0)


@lru_cache(maxsize=64)
def herm_basis(n: int) -> sp.csr_matrix:
    """Sparse complex ``G`` with ``vec(sigma) = G x`` for the real parameters ``x``."""
    rows, cols, vals = [], [], []
    k = 0
    for i in range(n):
        rows.append(i * n + i)
        cols.append(k)
        vals.append(1.0)
        k += 1
    for i in range(n):
        for j in range(i + 1, n):
            rows += [i * n + j, j * n + i]
            cols += [k, k]
            vals += [1.0, 1.0]
            k += 1
    for i in range(n):
        for j in range(i + 1, n):
            rows += [i * n + j, j * n + i]
            cols += [k, k]
            vals += [1j, -1j]
            k += 1
    return sp.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(n * n, n * n))


def herm_params(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`herm_basis` for a Hermitian matrix."""
    n = m.shape[0]
    iu = np.triu_indices(n, 1)
    return np.concatenate([np.real(np.diag(m)), np.real(m[iu]), np.imag(m[iu])])


@lru_cache(maxsize=64)
def _hvec_selector(m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    diag = np.array([i * m + i for i in range(m)])
    iu = np.triu_indices(m, 1)
    off = iu[0] * m + iu[1]
    return diag, off, off


def hvec_rows(y_map: sp.spmatrix, m: int) -> sp.csr_matrix:
    """Real rows extracting the independent real coordinates of a Hermitian ``Y`` from ``vec(Y) = y_map x``."""
    diag, off, _ = _hvec_selector(m)
    y = sp.csr_matrix(y_map)
    return sp.vstack([y[diag].real, y[off].real, y[off].imag]).tocsr()


@lru_cache(maxsize=64)
def _svec_embedding(m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """For the 2m x 2m real embedding, which Y entry, which part, sign and scale each svec slot uses."""
    entry, part, sign, scale = [], [], [], []
    for j in range(2 * m):
        for i in range(j + 1):
            bi, ri = divmod(i, m)
            bj, rj = divmod(j, m)
            # block (bi, bj): (0,0),(1,1) -> Re Y[ri,rj]; (0,1) -> -Im Y; (1,0) -> Im Y
            if bi == bj:
                entry.append(ri * m + rj)
                part.append(0)
                sign.append(1.0)
            elif bi == 0 and bj == 1:
                entry.append(ri * m + rj)
                part.append(1)
                sign.append(-1.0)
            else:
                entry.append(ri * m + rj)
                part.append(1)
                sign.append(1.0)
            scale.append(1.0 if i == j else SQRT2)
    return np.array(entry), np.array(part), np.array(sign), np.array(scale)


def psd_rows(y_map: sp.spmatrix, m: int) -> sp.csr_matrix:
    """Rows giving svec of the real embedding of ``Y`` (for a PSD-triangle cone)."""
    entry, part, sign, scale = _svec_embedding(m)
    y = sp.csr_matrix(y_map)
    picked = y[entry]
    re = picked.real
    im = picked.imag
    coef = sign * scale
    mask_re = sp.diags((part == 0) * coef)
    mask_im = sp.diags((part == 1) * coef)
    return (mask_re @ re + mask_im @ im).tocsr()


@lru_cache(maxsize=64)
def partial_trace_map(d1: int, d2: int, keep_first: bool) -> sp.csr_matrix:
    """Sparse map ``vec(sigma) -> vec(tr_other sigma)`` for ``sigma`` on ``d1 (x) d2``."""
    rows, cols = [], []
    n = d1 * d2
    if keep_first:
        for a in range(d1):
            for b in range(d1):
                for k in range(d2):
                    rows.append(a * d1 + b)
                    cols.append((a * d2 + k) * n + (b * d2 + k))
        shape = (d1 * d1, n * n)
    else:
        for a in range(d2):
            for b in range(d2):
                for k in range(d1):
                    rows.append(a * d2 + b)
                    cols.append((k * d2 + a) * n + (k * d2 + b))
        shape = (d2 * d2, n * n)
    return sp.csr_matrix((np.ones(len(rows), dtype=complex), (rows, cols)), shape=shape)


@lru_cache(maxsize=64)
def partial_transpose_map(d1: int, d2: int) -> sp.csr_matrix:
    """Sparse permutation of ``vec(sigma)`` transposing the second factor."""
    n = d1 * d2
    rows, cols = [], []
    for a in range(d1):
        for k in range(d2):
            for b in range(d1):
                for l in range(d2):
                    rows.append((a * d2 + k) * n + (b * d2 + l))
                    cols.append((a * d2 + l) * n + (b * d2 + k))
    return sp.csr_matrix((np.ones(len(rows), dtype=complex), (rows, cols)), shape=(n * n, n * n))


def linear_functional(f: np.ndarray, n: int) -> np.ndarray:
    """Real row ``c`` with ``c . x = Re tr(F sigma)``."""
    g = herm_basis(n)
    # tr(F sigma) = sum_ab F_ba sigma_ab = vec(F^T) . vec(sigma)
    return np.real(np.asarray(f, dtype=complex).T.reshape(-1) @ g)


@dataclass
class SDPResult:
    status: str  # optimal | infeasible | numerical-failure
    x: np.ndarray | None
    objective: float
    iterations: int
    raw_status: str


@dataclass
class SolverSettings:
    max_iter: int = 500
    tol_gap_abs: float = 1e-9
    tol_gap_rel: float = 1e-9
    tol_feas: float = 1e-9
    time_limit: float = 120.0


SETTINGS = SolverSettings()


def solve(
    c: np.ndarray,
    eq_rows: sp.spmatrix | None,
    eq_rhs: np.ndarray | None,
    psd_blocks: list[tuple[sp.spmatrix, int]],
) -> SDPResult:
    """Minimize ``c . x`` subject to ``eq_rows x = eq_rhs`` and each embedded block PSD.

    ``psd_blocks`` holds ``(rows, m)`` pairs from :func:`psd_rows`.
    """
    nx = len(c)
    a_parts, b_parts, cones = [], [], []
    if eq_rows is not None and eq_rows.shape[0]:
        a_parts.append(sp.csc_matrix(eq_rows))
        b_parts.append(np.asarray(eq_rhs, dtype=float))
        cones.append(clarabel.ZeroConeT(eq_rows.shape[0]))
    for rows, m in psd_blocks:
        # s = b - A x must equal svec(embedding), so A = -rows
        a_parts.append(-sp.csc_matrix(rows))
        b_parts.append(np.zeros(rows.shape[0]))
        cones.append(clarabel.PSDTriangleConeT(2 * m))
    a = sp.vstack(a_parts).tocsc()
    b = np.concatenate(b_parts)
    p = sp.csc_matrix((nx, nx))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = SETTINGS.max_iter
    settings.tol_gap_abs = SETTINGS.tol_gap_abs
    settings.tol_gap_rel = SETTINGS.tol_gap_rel
    settings.tol_feas = SETTINGS.tol_feas
    settings.time_limit = SETTINGS.time_limit
    solver = clarabel.DefaultSolver(p, np.asarray(c, dtype=float), a, b, cones, settings)
    sol = solver.solve()
    raw = str(sol.status)
    if raw.endswith("Solved"):
        status = "optimal" if raw == "Solved" else "almost"
    elif "Infeasible" in raw:
        status = "infeasible"
    else:
        status = "numerical-failure"
    x = np.array(sol.x) if status in ("optimal", "almost") else None
    return SDPResult(status, x, float(sol.obj_val) if x is not None else float("nan"), int(sol.iterations), raw)
