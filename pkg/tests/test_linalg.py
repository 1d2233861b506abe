import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rqpd import eigen
from rqpd import linalg as la

seeds = st.integers(0, 2**31 - 1)
small_dims = st.integers(1, 4)


def naive_partial_trace(m, d1, d2, keep_first):
    """Sum over explicit basis vectors of the traced factor."""
    if keep_first:
        out = np.zeros((d1, d1), dtype=complex)
        for k in range(d2):
            v = np.kron(np.eye(d1), la.ket(k, d2).reshape(d2, 1))
            out += v.conj().T @ m @ v
        return out
    out = np.zeros((d2, d2), dtype=complex)
    for k in range(d1):
        v = np.kron(la.ket(k, d1).reshape(d1, 1), np.eye(d2))
        out += v.conj().T @ m @ v
    return out


@given(seeds, small_dims, small_dims)
def test_partial_trace_matches_naive_sum(seed, d1, d2):
    rng = np.random.default_rng(seed)
    m = la.random_density(d1 * d2, rng)
    assert la.max_abs(la.partial_trace(m, (d1, d2), [0]) - naive_partial_trace(m, d1, d2, True)) < 1e-12
    assert la.max_abs(la.partial_trace(m, (d1, d2), [1]) - naive_partial_trace(m, d1, d2, False)) < 1e-12


@given(seeds)
def test_partial_trace_of_product(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (la.random_density(d, rng) for d in (2, 3, 2))
    m = la.tensor(a, b, c)
    assert la.max_abs(la.partial_trace(m, (2, 3, 2), [0, 2]) - np.kron(a, c)) < 1e-12
    assert la.max_abs(la.partial_trace(m, (2, 3, 2), [1]) - b) < 1e-12


@given(seeds)
def test_permute_is_conjugation_by_swap(seed):
    rng = np.random.default_rng(seed)
    a, b = la.random_hermitian(2, rng), la.random_hermitian(3, rng)
    swapped = la.permute(np.kron(a, b), (2, 3), (1, 0))
    assert la.max_abs(swapped - np.kron(b, a)) < 1e-12


def test_partial_transpose_detects_entanglement():
    bell = la.proj(la.max_entangled(2))
    assert la.min_eig(la.partial_transpose(bell, (2, 2), [1])) == pytest.approx(-0.5)
    prod = np.kron(la.proj(la.ket(0, 2)), np.eye(2) / 2)
    assert la.min_eig(la.partial_transpose(prod, (2, 2), [1])) >= -1e-12


@given(seeds, st.integers(1, 6))
def test_native_eigensolver_agrees_with_lapack(seed, d):
    rng = np.random.default_rng(seed)
    a = la.random_hermitian(d, rng)
    w, v = eigen.hermitian_eig(a)
    assert np.allclose(w, np.linalg.eigvalsh(a), atol=1e-10)
    assert la.max_abs(v @ np.diag(w) @ v.conj().T - a) < 1e-9
    assert la.max_abs(v.conj().T @ v - np.eye(d)) < 1e-9


def test_native_backend_switch_round_trip():
    a = np.diag([3.0, -1.0, 2.0])
    la.set_eigen_backend("native")
    try:
        assert np.allclose(la.eigvalsh(a), [-1, 2, 3])
    finally:
        la.set_eigen_backend("numpy")
    with pytest.raises(ValueError):
        la.set_eigen_backend("magic")


def test_degenerate_spectrum_native():
    a = la.proj(la.max_entangled(3))
    w, v = eigen.hermitian_eig(a)
    assert np.allclose(sorted(w), [0] * 8 + [1], atol=1e-10)
    assert la.max_abs(v @ np.diag(w) @ v.conj().T - a) < 1e-9


@given(seeds, st.integers(1, 3), st.integers(1, 3))
def test_choi_superop_kraus_round_trip(seed, din, dout):
    rng = np.random.default_rng(seed)
    kraus = la.random_channel(din, dout, rng, 3)
    mat = la.superop_matrix(kraus)
    choi = la.superop_to_choi(mat, din, dout)
    assert la.is_psd(choi, 1e-9)
    assert la.max_abs(la.choi_to_superop(choi, din, dout) - mat) < 1e-10
    rebuilt = la.kraus_from_choi(choi, din, dout)
    rho = la.random_density(din, rng)
    assert la.max_abs(la.apply_kraus(rebuilt, rho) - la.apply_kraus(kraus, rho)) < 1e-9
    assert la.max_abs(la.apply_superop(mat, rho, dout) - la.apply_kraus(kraus, rho)) < 1e-10
    assert la.is_trace_preserving(kraus)


@given(seeds)
def test_dual_map_adjointness(seed):
    rng = np.random.default_rng(seed)
    kraus = la.random_channel(3, 2, rng, 2)
    rho, a = la.random_density(3, rng), la.random_hermitian(2, rng)
    lhs = np.trace(a @ la.apply_kraus(kraus, rho))
    rhs = np.trace(la.apply_dual_kraus(kraus, a) @ rho)
    assert abs(lhs - rhs) < 1e-10


@given(seeds)
def test_random_objects_have_their_properties(seed):
    rng = np.random.default_rng(seed)
    assert la.is_unitary(la.haar_unitary(3, rng))
    assert la.is_density(la.random_density(4, rng), partial=False)
    assert la.is_predicate(la.random_predicate(3, rng))
    ops = la.random_measurement(3, rng, 3, projective=True)
    assert la.max_abs(sum(ops) - np.eye(3)) < 1e-10
    assert all(la.is_projector(p) for p in ops)


def test_loewner_helpers():
    a, b = np.diag([0.2, 0.5]), np.diag([0.3, 0.5])
    assert la.loewner_leq(a, b)
    assert not la.loewner_leq(b, a)
    assert la.loewner_gap(a, b) == pytest.approx(0.0, abs=1e-12)


def test_support_projector_and_fidelity():
    rho = np.diag([0.5, 0.5, 0.0])
    assert la.max_abs(la.support_projector(rho) - np.diag([1, 1, 0])) < 1e-12
    psi = la.ket(0, 3)
    assert la.fidelity(la.proj(psi), rho) == pytest.approx(0.5, abs=1e-9)


def test_symmetric_projector_and_swap():
    d = 3
    sym = la.sym_projector(d)
    assert la.is_projector(sym)
    assert np.trace(sym).real == pytest.approx(d * (d + 1) / 2)
    assert la.max_abs(la.swap_operator(d) @ la.swap_operator(d) - np.eye(d * d)) < 1e-12


@given(seeds)
def test_json_round_trip(seed):
    m = la.random_hermitian(3, np.random.default_rng(seed))
    assert la.max_abs(la.from_json(la.to_json(m)) - m) == 0
