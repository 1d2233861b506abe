"""Dense complex linear algebra on finite-dimensional Hilbert spaces.

Operators are plain ``numpy`` arrays.  Composite systems are described by a
tuple of factor dimensions (a "shape") and factors are addressed by index.
Vectorization is row-major, so ``vec(|b><a|) = |b>|a>`` and the matrix of a
channel with Kraus operators ``K_i`` is ``sum_i K_i (x) conj(K_i)``.
"""

from __future__ import annotations

from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from . import eigen

ATOL = 1e-9
RANK_TOL = 1e-8

_EIGEN_BACKEND = "numpy"


def set_eigen_backend(name: str) -> None:
    """Select ``"numpy"`` (LAPACK) or ``"native"`` (:mod:`rqpd.eigen`)."""
    global _EIGEN_BACKEND
    if name not in ("numpy", "native"):
        raise ValueError(f"unknown eigen backend {name!r}")
    _EIGEN_BACKEND = name


def eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=complex)
    if _EIGEN_BACKEND == "native":
        return eigen.hermitian_eig(a)
    return np.linalg.eigh(0.5 * (a + a.conj().T))


def eigvalsh(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if _EIGEN_BACKEND == "native":
        return eigen.hermitian_eig(a)[0]
    return np.linalg.eigvalsh(0.5 * (a + a.conj().T))


# basics -------------------------------------------------------------------

def dag(a: np.ndarray) -> np.ndarray:
    return np.conj(np.asarray(a)).T


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def proj(vector: np.ndarray) -> np.ndarray:
    v = np.asarray(vector, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


def basis_op(i: int, j: int, dim: int) -> np.ndarray:
    m = np.zeros((dim, dim), dtype=complex)
    m[i, j] = 1.0
    return m


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of any number of operators (or vectors)."""
    if len(ops) == 1 and isinstance(ops[0], (list, tuple)):
        ops = tuple(ops[0])
    if not ops:
        return np.ones((1, 1), dtype=complex)
    return reduce(np.kron, [np.asarray(o, dtype=complex) for o in ops])


def _check_shape(m: np.ndarray, shape: Sequence[int]) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if any(d < 1 for d in shape):
        raise ValueError(f"factor dimensions must be positive: {tuple(shape)}")
    total = int(np.prod(shape)) if len(shape) else 1
    if total != m.shape[0]:
        raise ValueError(f"matrix dim {m.shape[0]} does not match shape {tuple(shape)}")


def partial_trace(m: np.ndarray, shape: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every factor not listed in ``keep``; kept factors stay in order."""
    m = np.asarray(m, dtype=complex)
    shape = tuple(int(d) for d in shape)
    _check_shape(m, shape)
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(shape) for k in keep):
        raise ValueError(f"keep indices {keep} out of range for {len(shape)} factors")
    n = len(shape)
    t = m.reshape(shape + shape)
    # repeated einsum labels trace out the dropped factors
    row = list(range(n))
    col = [n + i if i in keep else i for i in range(n)]
    out = [i for i in keep] + [n + i for i in keep]
    res = np.einsum(t, row + col, out)
    d = int(np.prod([shape[k] for k in keep])) if keep else 1
    return res.reshape(d, d)


def permute(m: np.ndarray, shape: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors: new factor ``k`` is old factor ``order[k]``."""
    m = np.asarray(m, dtype=complex)
    shape = tuple(shape)
    n = len(shape)
    order = list(order)
    if sorted(order) != list(range(n)):
        raise ValueError(f"{order} is not a permutation of {n} factors")
    if m.ndim == 1:
        return m.reshape(shape).transpose(order).reshape(-1)
    _check_shape(m, shape)
    t = m.reshape(shape + shape).transpose(order + [n + i for i in order])
    d = m.shape[0]
    return t.reshape(d, d)


def partial_transpose(m: np.ndarray, shape: Sequence[int], factors: Iterable[int]) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    shape = tuple(shape)
    _check_shape(m, shape)
    n = len(shape)
    axes = list(range(2 * n))
    for f in factors:
        axes[f], axes[n + f] = axes[n + f], axes[f]
    return m.reshape(shape + shape).transpose(axes).reshape(m.shape)


# order and spectral helpers -----------------------------------------------

def is_hermitian(a: np.ndarray, tol: float = 1e-10) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.max(np.abs(a - dag(a)), initial=0.0) <= tol


def min_eig(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=complex)
    if a.size == 0:
        return 0.0
    return float(eigvalsh(a)[0])


def max_eig(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=complex)
    if a.size == 0:
        return 0.0
    return float(eigvalsh(a)[-1])


def is_psd(a: np.ndarray, tol: float = ATOL) -> bool:
    return is_hermitian(a, max(tol, 1e-10)) and min_eig(a) >= -tol


def is_density(rho: np.ndarray, tol: float = ATOL, partial: bool = True) -> bool:
    if not is_psd(rho, tol):
        return False
    t = float(np.real(np.trace(rho)))
    if partial:
        return -tol <= t <= 1 + tol
    return abs(t - 1) <= tol


def is_predicate(a: np.ndarray, tol: float = ATOL) -> bool:
    """0 <= a <= I in the Loewner order."""
    if not is_hermitian(a, 1e-10 if tol < 1e-8 else tol):
        return False
    w = eigvalsh(a)
    return bool(w[0] >= -tol and w[-1] <= 1 + tol)


def is_unitary(u: np.ndarray, tol: float = ATOL) -> bool:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return np.max(np.abs(dag(u) @ u - np.eye(u.shape[0])), initial=0.0) <= tol


def is_projector(p: np.ndarray, tol: float = 1e-8) -> bool:
    p = np.asarray(p, dtype=complex)
    return is_hermitian(p, tol) and np.max(np.abs(p @ p - p), initial=0.0) <= tol


def loewner_leq(a: np.ndarray, b: np.ndarray, tol: float = ATOL) -> bool:
    """``a <= b`` iff the least eigenvalue of ``b - a`` is at least ``-tol``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    return min_eig(b - a) >= -tol


def loewner_gap(a: np.ndarray, b: np.ndarray) -> float:
    """Least eigenvalue of ``b - a``; non-negative iff ``a <= b``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    return min_eig(b - a)


def support_projector(a: np.ndarray, rank_tol: float = RANK_TOL, psd_tol: float = 1e-7) -> np.ndarray:
    """Projector onto eigenvectors whose eigenvalue exceeds ``rank_tol * lambda_max``."""
    a = np.asarray(a, dtype=complex)
    w, v = eigh(a)
    scale = float(np.max(np.abs(w), initial=0.0))
    if w.size and w[0] < -psd_tol * max(scale, 1.0):
        raise ValueError(f"operator is not PSD (min eigenvalue {w[0]:.3e})")
    if scale <= 1e-300:
        return np.zeros_like(a)
    cols = v[:, w > rank_tol * scale]
    return cols @ dag(cols)


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = eigh(a)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ dag(v)


def clip_psd(a: np.ndarray) -> np.ndarray:
    w, v = eigh(a)
    return (v * np.clip(w, 0.0, None)) @ dag(v)


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    s = psd_sqrt(rho)
    inner = s @ np.asarray(sigma, dtype=complex) @ s
    return float(np.sum(np.sqrt(np.clip(eigvalsh(inner), 0.0, None))) ** 2)


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(a)), initial=0.0))


# named operators -----------------------------------------------------------

def swap_operator(d: int) -> np.ndarray:
    """``S = sum_ij |i><j| (x) |j><i|`` on ``C^d (x) C^d``."""
    if d < 1:
        raise ValueError("d must be positive")
    s = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            s[i * d + j, j * d + i] = 1.0
    return s


def sym_projector(d: int) -> np.ndarray:
    """Projector onto the symmetric subspace, ``(I + S) / 2``."""
    return 0.5 * (np.eye(d * d) + swap_operator(d))


def max_entangled(d: int) -> np.ndarray:
    """``(1/sqrt d) sum_i |ii>`` as a vector."""
    v = np.zeros(d * d, dtype=complex)
    for i in range(d):
        v[i * d + i] = 1.0
    return v / np.sqrt(d)


def basis_identity(basis: np.ndarray) -> np.ndarray:
    """Projector ``sum_i |b_i b_i><b_i b_i|`` for orthonormal columns ``b_i``."""
    basis = np.asarray(basis, dtype=complex)
    d = basis.shape[0]
    out = np.zeros((d * d, d * d), dtype=complex)
    for i in range(basis.shape[1]):
        out += proj(np.kron(basis[:, i], basis[:, i]))
    return out


# vectorization and channels ----------------------------------------------

def vec(m: np.ndarray) -> np.ndarray:
    """Row-major vectorization."""
    return np.asarray(m, dtype=complex).reshape(-1)


def unvec(v: np.ndarray, rows: int, cols: int | None = None) -> np.ndarray:
    return np.asarray(v, dtype=complex).reshape(rows, rows if cols is None else cols)


def _kraus_dims(kraus: Sequence[np.ndarray]) -> tuple[int, int]:
    if len(kraus) == 0:
        raise ValueError("empty Kraus list")
    shp = np.asarray(kraus[0]).shape
    for k in kraus:
        if np.asarray(k).shape != shp:
            raise ValueError(f"Kraus operator shapes differ: {shp} vs {np.asarray(k).shape}")
    return shp


def superop_matrix(kraus: Sequence[np.ndarray]) -> np.ndarray:
    """Matrix ``A`` with ``A vec(rho) = vec(sum K rho K^dagger)``."""
    _kraus_dims(kraus)
    return sum(np.kron(np.asarray(k, dtype=complex), np.conj(np.asarray(k, dtype=complex))) for k in kraus)


def apply_kraus(kraus: Sequence[np.ndarray], rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    return sum(k @ rho @ dag(k) for k in kraus)


def apply_dual_kraus(kraus: Sequence[np.ndarray], a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    return sum(dag(k) @ a @ k for k in kraus)


def apply_superop(mat: np.ndarray, rho: np.ndarray, d_out: int) -> np.ndarray:
    return unvec(mat @ vec(rho), d_out)


def superop_to_choi(mat: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    """Choi matrix ``J = sum_ij |i><j| (x) E(|i><j|)`` on ``C^d_in (x) C^d_out``."""
    t = np.asarray(mat, dtype=complex).reshape(d_out, d_out, d_in, d_in)
    # J[(i,a),(j,b)] = E(|i><j|)[a,b] = mat[(a,b),(i,j)]
    return t.transpose(2, 0, 3, 1).reshape(d_in * d_out, d_in * d_out)


def choi_to_superop(choi: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    t = np.asarray(choi, dtype=complex).reshape(d_in, d_out, d_in, d_out)
    return t.transpose(1, 3, 0, 2).reshape(d_out * d_out, d_in * d_in)


def kraus_from_choi(choi: np.ndarray, d_in: int, d_out: int, tol: float = 1e-12) -> list[np.ndarray]:
    w, v = eigh(choi)
    scale = max(1.0, float(np.max(np.abs(w), initial=0.0)))
    ops = []
    for val, col in zip(w, v.T):
        if val > tol * scale:
            # column indexed (i, a): K[a, i] = sqrt(val) * col[i, a]
            ops.append(np.sqrt(val) * col.reshape(d_in, d_out).T)
    if not ops:
        ops.append(np.zeros((d_out, d_in), dtype=complex))
    return ops


def kraus_from_superop(mat: np.ndarray, d_in: int, d_out: int) -> list[np.ndarray]:
    return kraus_from_choi(superop_to_choi(mat, d_in, d_out), d_in, d_out)


def dual_superop_matrix(mat: np.ndarray) -> np.ndarray:
    """Matrix of the dual map: ``vec(E*(A)) = A^dagger_mat vec(A)`` in row-major vec."""
    return dag(mat)


def is_trace_preserving(kraus: Sequence[np.ndarray], tol: float = ATOL) -> bool:
    d_in = np.asarray(kraus[0]).shape[1]
    s = sum(dag(k) @ k for k in kraus)
    return max_abs(s - np.eye(d_in)) <= tol


# random generators ---------------------------------------------------------

def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def haar_state(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_density(d: int, rng: np.random.Generator, rank: int | None = None, trace: float = 1.0) -> np.ndarray:
    r = d if rank is None else rank
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    rho = g @ dag(g)
    return trace * rho / np.real(np.trace(rho))


def random_predicate(d: int, rng: np.random.Generator) -> np.ndarray:
    u = haar_unitary(d, rng)
    return (u * rng.uniform(0, 1, d)) @ dag(u)


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return 0.5 * (g + dag(g))


def random_channel(d_in: int, d_out: int, rng: np.random.Generator, n_kraus: int = 2) -> list[np.ndarray]:
    """Random trace-preserving Kraus list via a Haar isometry."""
    u = haar_unitary(d_out * n_kraus, rng)[:, :d_in]
    return [u[k * d_out : (k + 1) * d_out, :] for k in range(n_kraus)]


def random_measurement(d: int, rng: np.random.Generator, outcomes: int = 2, projective: bool = False) -> list[np.ndarray]:
    if projective:
        u = haar_unitary(d, rng)
        cuts = np.sort(rng.choice(np.arange(1, d), size=min(outcomes - 1, d - 1), replace=False)) if d > 1 else []
        groups = np.split(np.arange(d), cuts)
        ops = [u[:, g] @ dag(u[:, g]) for g in groups]
        while len(ops) < outcomes:
            ops.append(np.zeros((d, d), dtype=complex))
        return ops
    return random_channel(d, d, rng, outcomes)


# JSON encoding -------------------------------------------------------------

def to_json(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=complex)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    return {
        "dims": [int(m.shape[0]), int(m.shape[1])],
        "entries": [[float(z.real), float(z.imag)] for z in m.reshape(-1)],
    }


def from_json(obj: dict) -> np.ndarray:
    try:
        r, c = obj["dims"]
        entries = obj["entries"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed matrix JSON: {exc}") from exc
    if len(entries) != r * c:
        raise ValueError(f"matrix JSON has {len(entries)} entries, expected {r * c}")
    arr = np.array([complex(re, im) for re, im in entries], dtype=complex)
    return arr.reshape(r, c)
