"""Self-contained Hermitian eigensolver.

Householder reduction of a complex Hermitian matrix to a real symmetric
tridiagonal form followed by the implicit QL iteration with Wilkinson-style
shifts.  Used as an independent route against LAPACK and selectable as the
default backend through :func:`rqpd.linalg.set_eigen_backend`.
"""

from __future__ import annotations

import numpy as np


def _householder_tridiagonal(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (diag, offdiag, Q) with Q^dagger a Q Hermitian tridiagonal."""
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    q = np.eye(n, dtype=complex)
    for k in range(n - 2):
        x = a[k + 1 :, k].copy()
        alpha = np.linalg.norm(x)
        if alpha < 1e-300:
            continue
        phase = x[0] / abs(x[0]) if abs(x[0]) > 0 else 1.0
        v = x.copy()
        v[0] += phase * alpha
        vn = np.linalg.norm(v)
        if vn < 1e-300:
            continue
        v /= vn
        # reflector P = I - 2 v v^dagger acting on rows/cols k+1..
        sub = a[k + 1 :, :]
        a[k + 1 :, :] = sub - 2.0 * np.outer(v, v.conj() @ sub)
        sub = a[:, k + 1 :]
        a[:, k + 1 :] = sub - 2.0 * np.outer(sub @ v, v.conj())
        qs = q[:, k + 1 :]
        q[:, k + 1 :] = qs - 2.0 * np.outer(qs @ v, v.conj())
    diag = np.real(np.diag(a)).copy()
    off = np.diag(a, -1).copy()
    # rotate phases so the subdiagonal becomes real and non-negative
    phases = np.ones(n, dtype=complex)
    for i in range(1, n):
        z = off[i - 1]
        ph = z / abs(z) if abs(z) > 0 else 1.0
        phases[i] = phases[i - 1] * ph
    q = q * phases[np.newaxis, :]
    return diag, np.abs(off), q


def _tridiagonal_ql(d: np.ndarray, e: np.ndarray, z: np.ndarray, max_sweeps: int = 60) -> None:
    """In-place implicit QL on a symmetric tridiagonal matrix.

    ``d`` holds the diagonal, ``e`` the subdiagonal padded to length n, and
    the columns of ``z`` are rotated alongside.
    """
    n = d.shape[0]
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= np.finfo(float).eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_sweeps:
                raise np.linalg.LinAlgError("QL iteration did not converge")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0 else -r))
            s = c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = np.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi = z[:, i].copy()
                zi1 = z[:, i + 1].copy()
                z[:, i + 1] = s * zi + c * zi1
                z[:, i] = c * zi - s * zi1
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0


def hermitian_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and unitary eigenvector matrix of Hermitian ``a``."""
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0), dtype=complex)
    if n == 1:
        return np.array([a[0, 0].real]), np.ones((1, 1), dtype=complex)
    herm = 0.5 * (a + a.conj().T)
    d, off, q = _householder_tridiagonal(herm)
    e = np.zeros(n)
    e[: n - 1] = off
    z = np.eye(n)
    _tridiagonal_ql(d, e, z)
    order = np.argsort(d, kind="stable")
    vecs = q @ z[:, order]
    return d[order], vecs
